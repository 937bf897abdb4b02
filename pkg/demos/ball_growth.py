"""Growing and merging balls.

Run with ``python demos/ball_growth.py``.

Balls grow like e^t and merge on contact into a ball whose radius is the sum
and whose centre is the radius-weighted mean. The total radius therefore never
exceeds e^t times the initial total, and every ball stays inside its
descendants. The script replays the two-ball case, whose merge time is ln 2,
and then checks the invariants on random families.
"""

import math

import numpy as np

from episcale import evolve, merge_to_disjoint, verify_properties
from episcale.balls import random_family


def two_balls():
    trace = evolve(merge_to_disjoint([((0, 0), 1), ((4, 0), 1)]), 1.0)
    print("Two unit balls four apart:")
    print(trace.events_csv())
    (merge,) = [e for e in trace.events if e.kind == "collision"]
    print(f"merge at t = {merge.t!r}, ln 2 = {math.log(2)!r}\n")


def random_families(n=200):
    rng = np.random.default_rng(0)
    merges = violations = 0
    for _ in range(n):
        balls = random_family(rng)
        trace = evolve(merge_to_disjoint(balls), 2.0)
        merges += sum(e.kind != "ball" for e in trace.events)
        violations += len(verify_properties(balls, trace, [0, 0.5, 1, 2]).violations)
    print(f"{n} random families: {merges} merges, {violations} property violations")


if __name__ == "__main__":
    two_balls()
    random_families()
