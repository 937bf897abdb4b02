import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from episcale import (DomainError, ModelParams, fit_exponent, flat_film_favorability,
                      optimal_L_dislocation, optimal_L_elastic, scaling_function_s, sweep)
from episcale.scaling import (Branch, SweepGrid, crossover_d, dislocation_construction,
                              dislocation_free_construction, construction_energy,
                              dislocation_upper_model, fit_power_law, flat_film_energies,
                              log_axis, row_value, scaling_branches, sweep_csv)
from strategies import theorem_valid_params

RATIO = 64.0**4


def test_s_at_unit_parameters():
    params = ModelParams(gamma=1, e0=1, b=1, d=1, r0=64.0**-4)
    s = scaling_function_s(params)
    dislocation = math.sqrt(1 + 16 * math.log(64))
    assert s.value == pytest.approx(2 + min(1.0, dislocation), rel=1e-15)
    assert s.value == pytest.approx(3.0)
    assert s.branch is Branch.ELASTIC


def test_s_without_volume_is_gamma():
    params = ModelParams(gamma=2.5, e0=1, b=1, d=0, r0=64.0**-4)
    assert scaling_function_s(params).value == 2.5


def test_s_requires_theorem_hypothesis():
    with pytest.raises(DomainError):
        scaling_function_s(ModelParams(gamma=1, e0=1, b=1, d=1, r0=1e-3))


def test_s_nondecreasing_along_d_ray():
    values = [scaling_function_s(theorem_valid_params(d=d)).value for d in np.logspace(-6, 0, 20)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def _monotone_pairs(rng, n):
    for _ in range(n):
        base = dict(gamma=10 ** rng.uniform(-1, 1), e0=10 ** rng.uniform(-1, 1),
                    b=10 ** rng.uniform(-4, -1), d=10 ** rng.uniform(-4, 0))
        yield base, str(rng.choice(["gamma", "e0", "b", "d"])), 1 + rng.uniform(0, 1)


def test_s_monotone_in_each_parameter():
    rng = np.random.default_rng(0)
    for base, name, factor in _monotone_pairs(rng, 1000):
        lo = dict(base)
        hi = dict(base, **{name: base[name] * factor})
        # r0 is held fixed and small enough for both points
        r0 = min(lo["b"] / lo["e0"], hi["b"] / hi["e0"]) / (2 * RATIO)
        s_lo = scaling_function_s(ModelParams(r0=r0, **lo)).value
        s_hi = scaling_function_s(ModelParams(r0=r0, **hi)).value
        assert s_hi >= s_lo * (1 - 1e-14)


def test_s_nonincreasing_in_r0_on_dislocation_branch():
    params = theorem_valid_params(e0=1, b=1e-4, d=1e-6, ratio=10 * RATIO)
    s1 = scaling_function_s(params)
    s2 = scaling_function_s(params.replace(r0=params.r0 * 5))
    assert s1.branch is Branch.DISLOCATION
    assert s2.value <= s1.value


@settings(max_examples=300, deadline=None)
@given(e0=st.floats(1e-2, 1e2), b=st.floats(1e-5, 1e-1), d=st.floats(1e-8, 1.0),
       extra=st.floats(1.0, 1e3))
def test_branch_is_argmin(e0, b, d, extra):
    params = ModelParams(gamma=1, e0=e0, b=b, d=d, r0=min(1.0, b / (e0 * RATIO * extra)))
    elastic, disl = scaling_branches(params)
    s = scaling_function_s(params)
    assert s.branch is (Branch.ELASTIC if elastic <= disl else Branch.DISLOCATION)


def test_dislocation_length_capped_at_one():
    params = ModelParams(gamma=1, e0=0.1, b=0.01, d=1, r0=1e-6, c0=1)
    raw = math.sqrt(1 / (0.1 * 0.01 * (2 + math.log(0.01 / (0.1 * 1e-6)))))
    assert raw == pytest.approx(8.6, abs=0.05)
    assert optimal_L_dislocation(params) == 1.0


def test_dislocation_length_local_optimality():
    params = theorem_valid_params(e0=1, b=1e-3, d=1e-3)
    L = optimal_L_dislocation(params)
    assert L < min(1.0, params.d / (4 * params.r0))
    best = dislocation_upper_model(L, params)
    for f in (0.9, 0.95, 1.05, 1.1):
        assert dislocation_upper_model(L * f, params) >= best - 1e-12


def test_dislocation_length_forced_by_core_room():
    params = ModelParams(gamma=1, e0=1, b=1, d=1e-3, r0=0.2)
    assert optimal_L_dislocation(params) == pytest.approx(1e-3 / 0.8)


def test_elastic_length_examples():
    assert optimal_L_elastic(ModelParams(gamma=1, e0=10, b=1, d=1, r0=1)) == pytest.approx(
        10 ** (-2 / 3), rel=1e-14)
    assert 10 ** (-2 / 3) == pytest.approx(0.2154, abs=1e-4)
    assert optimal_L_elastic(ModelParams(gamma=1, e0=0.1, b=1, d=1, r0=1)) == 1.0
    assert optimal_L_elastic(ModelParams(gamma=4, e0=2, b=1, d=1, r0=1)) == 1.0


def test_dislocation_free_wins_deep_in_elastic_branch():
    from episcale import best_construction

    params = theorem_valid_params(e0=1, b=1e-1, d=1e-4)
    elastic, disl = scaling_branches(params)
    assert elastic < disl / 5
    rep = best_construction(params)
    assert rep.winner == "dislocation_free"
    assert rep.active_branch is Branch.ELASTIC


def test_constructions_comparable_at_crossover():
    base = theorem_valid_params(e0=1, b=1e-2, d=1e-2)
    d_star = crossover_d(base, 1e-3, 1e-1)
    params = base.replace(d=d_star)
    elastic, disl = scaling_branches(params)
    assert elastic == pytest.approx(disl, rel=1e-8)
    with_d = construction_energy(dislocation_construction(params), params)
    without = construction_energy(dislocation_free_construction(params), params)
    ratio = with_d.total / without.total
    assert 1 / 4 <= ratio <= 4


def test_sweep_edge_cases():
    assert sweep([]) == []
    rows = sweep([dict(gamma=1, e0=1, b=1e-3, d=0.1, r0=1e-12),
                  dict(gamma=1, e0=1, b=1e-3, d=0.1, r0=2.0)],
                 constructions=("dislocation_free",))
    assert not rows[0].flagged
    assert rows[1].flagged and "r0" in rows[1].error
    assert sweep_csv(rows).splitlines()[2].endswith(",error")


def test_elastic_sweep_ratios_and_exact_slope():
    grid = SweepGrid.product(dict(gamma=1, e0=10, b=1, c0=1), {"d": log_axis(-3, 3, 10)},
                             r0_ratio=RATIO)
    rows = sweep(grid, constructions=("dislocation_free",))
    assert len(rows) == 30
    assert not any(r.flagged for r in rows)
    assert all(r.branch == "elastic" for r in rows)
    ratios = [r.ratio for r in rows]
    assert max(ratios) / min(ratios) < 100
    assert fit_exponent(rows, "d", "s_min").slope == pytest.approx(2 / 3, abs=1e-12)


def test_sweep_is_order_stable_across_threads():
    grid = SweepGrid.product(dict(gamma=1, e0=10, b=1, c0=1), {"d": log_axis(-2, 1, 8)},
                             r0_ratio=RATIO)
    one = sweep_csv(sweep(grid, threads=1, constructions=("dislocation_free",)))
    four = sweep_csv(sweep(grid, threads=4, constructions=("dislocation_free",)))
    assert one == four


def test_linked_axes_and_r0_ratio():
    grid = SweepGrid.product(dict(gamma=1, d=0.1), {"e0+b": [(1, 1e-3), (2, 2e-3)]}, 100.0)
    pts = grid.points()
    assert [(p["e0"], p["b"]) for p in pts] == [(1.0, 1e-3), (2.0, 2e-3)]
    assert pts[1]["r0"] == pytest.approx(1e-5)


def test_power_fit_needs_enough_points():
    with pytest.raises(DomainError):
        fit_power_law([1, 2, 3], [1, 2, 3])
    fit = fit_power_law(np.logspace(0, 2, 9), 3 * np.logspace(0, 2, 9) ** 0.5)
    assert fit.slope == pytest.approx(0.5) and fit.r2 == pytest.approx(1.0)


def test_row_value_names():
    grid = SweepGrid.product(dict(gamma=1, e0=10, b=1, c0=1, d=0.5), {}, r0_ratio=RATIO)
    (row,) = sweep(grid, constructions=("dislocation_free",))
    assert row_value(row, "min_term") == pytest.approx(row.energy.total - 1.5)
    with pytest.raises(DomainError):
        row_value(row, "nope")


def test_favorability_examples():
    params = theorem_valid_params(e0=1, b=1e-3, d=1.0)
    rhs = params.period * params.log_ratio
    L = 10 * rhs
    assert flat_film_favorability(L, params.replace(d=L * L)).favorable
    assert not flat_film_favorability(rhs / 100, params).favorable


def test_flat_film_energies_agree_at_favorability_boundary():
    params = theorem_valid_params(e0=1, b=1e-3, d=1e-2)
    L = params.period * params.log_ratio
    fav = flat_film_favorability(L, params)
    assert fav.lhs == pytest.approx(fav.rhs)
    without, with_disl = flat_film_energies(L, params)
    assert 1 / 8 <= without / with_disl <= 8
