"""Random inputs shared by the test modules."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from hypothesis import strategies as st

from episcale import (BoxFamily, DislocationMeasure, ModelParams, Mollified, MollifierSpec,
                      PeriodicDislocation, Profile, largest_square)


def random_profile(rng: np.random.Generator, d: float, max_inner: int = 8) -> Profile:
    """Admissible piecewise-linear profile of volume ``d`` with random kinks,
    possibly with zero stretches (disconnected support)."""
    n = int(rng.integers(1, max_inner + 1))
    xs = np.concatenate(([0.0], np.sort(rng.uniform(0.0, 1.0, n)), [1.0]))
    xs = np.unique(xs)
    hs = rng.uniform(0.0, 1.0, xs.size) * (rng.random(xs.size) > 0.2)
    hs[0] = hs[-1] = 0.0
    if not np.any(hs > 0):
        hs[xs.size // 2] = 1.0
    prof = Profile(xs, hs)
    return Profile(xs, hs * (d / prof.integral()))


def random_boxes(rng: np.random.Generator, profile: Profile, tries: int = 6) -> BoxFamily:
    """Disjoint squares under the graph, ordered left to right."""
    boxes = []
    x = 0.0
    for _ in range(tries):
        x = x + rng.uniform(0.0, 0.3)
        if x >= 1.0:
            break
        side = largest_square(profile, x)
        if side <= 0:
            continue
        side *= rng.uniform(0.2, 1.0)
        boxes.append((x, side))
        x += side
    return BoxFamily(tuple(boxes))


def theorem_valid_params(gamma=1.0, e0=1.0, b=1e-3, d=0.1, ratio=64.0**4, c0=1.0) -> ModelParams:
    return ModelParams(gamma=gamma, e0=e0, b=b, d=d, r0=b / (e0 * ratio), c0=c0)


positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False)


def annulus_instance(rng: np.random.Generator, cores: int):
    """A mollified dislocation field with a random annulus around one core or
    between two neighbouring cores; ``(field, center, r, R, sigma)``."""
    e0 = 10 ** rng.uniform(-0.3, 0.3)
    p = rng.uniform(0.1, 0.2)
    ratio = rng.uniform(40, 80)
    params = ModelParams(gamma=1.0, e0=e0, b=p * e0, d=1.0, r0=p / ratio)
    base = PeriodicDislocation(params, 5, 5.5 * p)
    field = replace(Mollified(base, MollifierSpec(params.r0)), adaptive=False)
    sigma = DislocationMeasure(params.b, params.r0, tuple(base.cores(0.0, base.junction)))
    r0 = params.r0
    i = int(rng.integers(1, 3))
    if cores == 1:
        cx, r_min, R_max = i * p, r0, p - r0
    else:
        cx, r_min, R_max = (i + 0.5) * p, 0.5 * p + r0, 1.5 * p - r0
    r = r_min * rng.uniform(1.1, 1.5)
    # shift the centre without letting any core straddle the annulus
    slack = min(r - r_min, R_max - 1.2 * r) * 0.5
    phi = rng.uniform(0, 2 * np.pi)
    shift = rng.uniform(0, max(slack, 0.0))
    center = (cx + shift * np.cos(phi), r0 + shift * np.sin(phi))
    R = rng.uniform(1.2 * r + shift, R_max - shift)
    return field, center, r, R, sigma


def strip_instance(rng: np.random.Generator):
    """A raw dislocation field with a random strip square inside ``[0, 1]``;
    ``(field, x_i, l_i, x_bar, e0)``."""
    e0 = 10 ** rng.uniform(-0.3, 0.3)
    p = rng.uniform(0.02, 0.08)
    params = ModelParams(gamma=1.0, e0=e0, b=p * e0, d=1.0, r0=p / rng.uniform(20, 80))
    k = int(rng.integers(2, 8))
    field = PeriodicDislocation(params, k, min(1.0, (k + 0.5) * p))
    l_i = rng.uniform(0.1, 0.5)
    # place the square near the cores so the curl gate is exercised
    x_i = rng.uniform(0.0, min(1.0 - l_i, k * p))
    x_bar = x_i + rng.uniform(0.01, 0.99) * l_i / 8
    return field, x_i, l_i, x_bar, e0
