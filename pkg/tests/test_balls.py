import math

import numpy as np
import pytest

from episcale import DomainError, evolve, merge_to_disjoint, verify_properties
from episcale.balls import collision_ratios, random_family


def test_overlapping_pair_merges_to_weighted_centre():
    fam = merge_to_disjoint([((0, 0), 1), ((1, 0), 1)])
    (ball,) = fam.balls
    assert ball[0] == (0.5, 0.0)
    assert ball[1] == 2.0


def test_separated_pair_is_unchanged():
    fam = merge_to_disjoint([((0, 0), 1), ((3, 0), 1)])
    assert [b[1] for b in fam.balls] == [1.0, 1.0]


def test_chain_cascades_in_id_order():
    fam = merge_to_disjoint([((0, 0), 1), ((1.5, 0), 1), ((3, 0), 1)])
    (ball,) = fam.balls
    # (0, 1) merge first into r=2 at 0.75; then that ball absorbs ball 2
    assert ball[1] == 3.0
    assert ball[0][0] == pytest.approx((2 * 0.75 + 3.0) / 3, abs=1e-15)
    assert [e.kind for e in fam.events[3:]] == ["merge", "merge"]


def test_bad_radius_rejected():
    with pytest.raises(DomainError):
        merge_to_disjoint([((0, 0), 0.0)])


def test_two_balls_collide_at_log_two():
    fam = evolve(merge_to_disjoint([((0, 0), 1), ((4, 0), 1)]), 1.0)
    (col,) = [e for e in fam.events if e.kind == "collision"]
    assert col.t == pytest.approx(math.log(2), abs=1e-12)
    assert (col.cx, col.cy, col.r) == pytest.approx((2.0, 0.0, 4.0))
    # the radius-sum bound is an equality at the merge
    assert col.r == pytest.approx(math.exp(col.t) * 2)


def test_single_ball_only_expands():
    fam = evolve(merge_to_disjoint([((0.3, 0.2), 0.5)]), 2.0)
    assert [e.kind for e in fam.events] == ["ball"]
    assert fam.balls[0][1] == pytest.approx(0.5 * math.exp(2.0))
    assert verify_properties([((0.3, 0.2), 0.5)], fam, [0, 1, 2]).ok


def test_time_must_advance():
    fam = merge_to_disjoint([((0, 0), 1)])
    with pytest.raises(DomainError):
        evolve(fam, 0.0)


def test_untouched_ball_grows_exponentially_in_place():
    rng = np.random.default_rng(3)
    for _ in range(50):
        balls = random_family(rng)
        trace = evolve(merge_to_disjoint(balls), 2.0)
        s, t = 0.5, 1.5
        for rec in trace.state(s):
            owner = trace.records[trace.owner(rec.id, t)]
            if owner.id == rec.id:
                assert owner.radius_at(t) == pytest.approx(math.exp(t - s) * rec.radius_at(s))
                assert (owner.cx, owner.cy) == (rec.cx, rec.cy)


def test_random_families_satisfy_all_properties():
    rng = np.random.default_rng(0)
    for _ in range(200):
        balls = random_family(rng)
        trace = evolve(merge_to_disjoint(balls), 2.0)
        report = verify_properties(balls, trace, [0, 0.5, 1, 2])
        assert report.ok, report.violations
        assert len([e for e in trace.events if e.kind != "ball"]) <= len(balls) - 1
        assert all(abs(r - 1) <= 1e-9 for r in collision_ratios(trace))


def test_collinear_equal_spacing_cascades():
    balls = [((0.1 * i, 0.0), 0.02) for i in range(10)]
    trace = evolve(merge_to_disjoint(balls), 3.0)
    assert verify_properties(balls, trace, [0, 0.5, 1, 2, 3]).ok
    kinds = [e.kind for e in trace.events]
    assert "merge" in kinds
    assert len(trace.balls) == 1


def test_owner_chain_radii_do_not_shrink():
    rng = np.random.default_rng(1)
    balls = random_family(rng, max_balls=20)
    trace = evolve(merge_to_disjoint(balls), 2.0)
    times = sorted({0.0, *(e.t for e in trace.events), 2.0})
    for i in trace.initial:
        radii = []
        for t in times:
            if t < trace.records[i].born:
                continue
            radii.append(trace.records[trace.owner(i, t)].radius_at(t))
        assert all(b >= a * (1 - 1e-12) for a, b in zip(radii, radii[1:]))


def test_evolution_is_deterministic():
    rng = np.random.default_rng(7)
    balls = random_family(rng)
    a = evolve(merge_to_disjoint(balls), 2.0).events_csv()
    b = evolve(merge_to_disjoint(balls), 2.0).events_csv()
    assert a == b
    assert a.splitlines()[0] == "t,event,id_a,id_b,id_new,cx,cy,r"


def test_verify_rejects_times_past_trace():
    trace = evolve(merge_to_disjoint([((0, 0), 1)]), 1.0)
    with pytest.raises(DomainError):
        verify_properties([((0, 0), 1)], trace, [2.0])


def test_verify_reports_tampered_trace():
    balls = [((0, 0), 1), ((4, 0), 1)]
    trace = evolve(merge_to_disjoint(balls), 1.0)
    merged = max(trace.records)
    from dataclasses import replace
    trace.records[merged] = replace(trace.records[merged], radius=1.0)
    report = verify_properties(balls, trace, [0, 1.0])
    assert not report.ok
    assert {v[0] for v in report.violations} >= {"coverage", "nesting"}
