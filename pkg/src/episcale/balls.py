"""Event-driven ball construction: disjoint balls grow at a common exponential
rate and merge on contact."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .exceptions import DomainError

#: Relative tolerance for closure contact and simultaneous events.
CONTACT_TOL = 1e-12


@dataclass(frozen=True)
class BallRecord:
    """A ball alive on ``[born, died)``; its radius at time ``t`` is
    ``radius * exp(t - born)``."""

    id: int
    cx: float
    cy: float
    radius: float
    born: float
    died: float = math.inf
    parent: int | None = None
    children: tuple = ()

    def radius_at(self, t: float) -> float:
        return self.radius * math.exp(t - self.born)

    def alive_at(self, t: float) -> bool:
        return self.born <= t < self.died


@dataclass(frozen=True)
class BallEvent:
    t: float
    kind: str
    id_a: int
    id_b: int
    id_new: int
    cx: float
    cy: float
    r: float


@dataclass
class BallFamily:
    """Current balls at time ``time`` together with their full history.

    ``records`` holds every ball ever created, keyed by id; ``initial`` the
    ids of the input balls. Parent links in the records form the merge tree.
    """

    time: float
    records: dict
    initial: tuple
    events: list = field(default_factory=list)

    @property
    def current(self) -> list[BallRecord]:
        return [r for r in self.records.values() if r.died == math.inf]

    @property
    def balls(self) -> list[tuple[tuple[float, float], float, int]]:
        return [((r.cx, r.cy), r.radius_at(self.time), r.id) for r in self.current]

    def state(self, t: float) -> list[BallRecord]:
        """Balls alive at time ``t``."""
        return [r for r in self.records.values() if r.alive_at(t)]

    def owner(self, ball_id: int, t: float) -> int:
        """Id of the ball alive at ``t`` that descends from ``ball_id``."""
        rec = self.records[ball_id]
        while not rec.alive_at(t):
            if rec.parent is None or rec.died > t:
                raise DomainError(f"ball {ball_id} is not alive at or before t={t!r}")
            rec = self.records[rec.parent]
        return rec.id

    def copy(self) -> "BallFamily":
        return BallFamily(self.time, dict(self.records), self.initial, list(self.events))

    def events_csv(self, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write(header)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "event", "id_a", "id_b", "id_new", "cx", "cy", "r"])
        for e in self.events:
            w.writerow([repr(e.t), e.kind, e.id_a, e.id_b, e.id_new, repr(e.cx), repr(e.cy), repr(e.r)])
        return buf.getvalue()


def _touching(a: BallRecord, b: BallRecord, t: float) -> bool:
    dist = math.hypot(a.cx - b.cx, a.cy - b.cy)
    return dist - (a.radius_at(t) + b.radius_at(t)) <= CONTACT_TOL * dist


def _merge(family: BallFamily, ia: int, ib: int, t: float, kind: str) -> int:
    a, b = family.records[ia], family.records[ib]
    ra, rb = a.radius_at(t), b.radius_at(t)
    r = ra + rb
    cx = (ra * a.cx + rb * b.cx) / r
    cy = (ra * a.cy + rb * b.cy) / r
    new_id = max(family.records) + 1
    family.records[new_id] = BallRecord(new_id, cx, cy, r, t, children=(ia, ib))
    family.records[ia] = replace(a, died=t, parent=new_id)
    family.records[ib] = replace(b, died=t, parent=new_id)
    family.events.append(BallEvent(t, kind, ia, ib, new_id, cx, cy, r))
    return new_id


def _cascade(family: BallFamily, t: float):
    """Merge touching pairs, smallest id pair first, until closures are
    pairwise disjoint."""
    while True:
        cur = sorted(family.current, key=lambda r: r.id)
        pair = None
        for i, a in enumerate(cur):
            for b in cur[i + 1:]:
                if _touching(a, b, t):
                    pair = (a.id, b.id)
                    break
            if pair:
                break
        if pair is None:
            return
        _merge(family, pair[0], pair[1], t, "merge")


def merge_to_disjoint(balls: Sequence) -> BallFamily:
    """Family at time 0 obtained by merging overlapping input balls.

    ``balls`` holds ``((cx, cy), r)`` pairs; they get ids ``0 .. n-1`` in
    input order and merged balls get fresh ids.
    """
    records = {}
    events = []
    for i, (center, r) in enumerate(balls):
        cx, cy = map(float, center)
        r = float(r)
        if not (r > 0) or not (math.isfinite(cx) and math.isfinite(cy)):
            raise DomainError(f"ball {i} needs a finite centre and positive radius")
        records[i] = BallRecord(i, cx, cy, r, 0.0)
        events.append(BallEvent(0.0, "ball", i, -1, i, cx, cy, r))
    family = BallFamily(0.0, records, tuple(range(len(records))), events)
    _cascade(family, 0.0)
    return family


def _next_collision(family: BallFamily, s: float):
    cur = sorted(family.current, key=lambda r: r.id)
    best = None
    for i, a in enumerate(cur):
        for b in cur[i + 1:]:
            dist = math.hypot(a.cx - b.cx, a.cy - b.cy)
            t = s + math.log(dist / (a.radius_at(s) + b.radius_at(s)))
            if best is None or t < best[0] * (1 - CONTACT_TOL) - CONTACT_TOL:
                best = (t, a.id, b.id)
    return best


def evolve(family: BallFamily, t: float) -> BallFamily:
    """Grow all balls by ``exp(t - s)`` and merge on contact, up to time ``t``.

    Collisions come from ``s + log(|p_i - p_j| / (r_i(s) + r_j(s)))``; among
    collisions within relative time ``1e-12`` of each other the pair with the
    smallest ids goes first, followed by any cascade at frozen time.
    """
    s = family.time
    if not (t > s):
        raise DomainError(f"target time must exceed the current time {s!r}, got {t!r}")
    out = family.copy()
    while True:
        nxt = _next_collision(out, out.time)
        if nxt is None or nxt[0] > t:
            break
        tc = max(nxt[0], out.time)
        _merge(out, nxt[1], nxt[2], tc, "collision")
        _cascade(out, tc)
        out.time = tc
    out.time = t
    return out


@dataclass
class PropertyReport:
    checked: int
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def _contains(big_c, big_r, c, r, tol=1e-9) -> bool:
    return math.hypot(big_c[0] - c[0], big_c[1] - c[1]) + r <= big_r * (1 + tol) + tol * r


def verify_properties(initial: Sequence, trace: BallFamily, times: Sequence[float],
                      tol: float = 1e-9) -> PropertyReport:
    """Check the growth bound, coverage of the input balls, nesting of
    expanded balls, and disjointness at the sampled times."""
    times = sorted(float(t) for t in times)
    if times and times[-1] > trace.time:
        raise DomainError("sample times exceed the evolved time")
    init_sum = math.fsum(float(r) for _, r in initial)
    violations = []
    checked = 0
    for t in times:
        alive = trace.state(t)
        checked += 1
        total = math.fsum(b.radius_at(t) for b in alive)
        if total > math.exp(t) * init_sum * (1 + tol):
            violations.append(("radius_sum", t, total, math.exp(t) * init_sum))
        for i, (c, r) in enumerate(initial):
            if not any(_contains((b.cx, b.cy), b.radius_at(t), c, float(r), tol) for b in alive):
                violations.append(("coverage", t, i))
        for i, a in enumerate(alive):
            for b in alive[i + 1:]:
                dist = math.hypot(a.cx - b.cx, a.cy - b.cy)
                if dist < (a.radius_at(t) + b.radius_at(t)) * (1 - tol):
                    violations.append(("disjoint", t, a.id, b.id))
    for i, s in enumerate(times):
        for t in times[i + 1:]:
            for a in trace.state(s):
                owner = trace.records[trace.owner(a.id, t)]
                grown = math.exp(t - s) * a.radius_at(s)
                if not _contains((owner.cx, owner.cy), owner.radius_at(t), (a.cx, a.cy), grown, tol):
                    violations.append(("nesting", s, t, a.id, owner.id))
    return PropertyReport(checked, violations)


def collision_ratios(trace: BallFamily) -> list[float]:
    """``|p_a - p_b| / (r_a + r_b)`` at every collision event (1 when exact)."""
    out = []
    for e in trace.events:
        if e.kind != "collision":
            continue
        a, b = trace.records[e.id_a], trace.records[e.id_b]
        out.append(math.hypot(a.cx - b.cx, a.cy - b.cy) / (a.radius_at(e.t) + b.radius_at(e.t)))
    return out


def random_family(rng: np.random.Generator, max_balls: int = 20, r_min: float = 1e-3,
                  r_max: float = 1.0) -> list:
    """Up to ``max_balls`` balls with centres in the unit square and
    log-uniform radii."""
    n = int(rng.integers(1, max_balls + 1))
    centres = rng.random((n, 2))
    radii = np.exp(rng.uniform(math.log(r_min), math.log(r_max), n))
    return [((float(x), float(y)), float(r)) for (x, y), r in zip(centres, radii)]
