"""Polygon clipping and adaptive Gauss quadrature over the film domain."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exceptions import DomainError, NumericalError
from .geometry import Profile

Polygon = np.ndarray  # (n, 2) vertices in counterclockwise order


@dataclass(frozen=True)
class QuadratureSpec:
    """Knobs of the adaptive quadrature.

    ``base_cell`` is the side of the initial square cells, ``max_depth`` the
    number of allowed bisections, ``order`` the Gauss order per cell and
    direction. The absolute tolerance is ``atol`` times the field's squared
    scale times the area (see :func:`adaptive_integrate`).
    """

    base_cell: float = 0.25
    max_depth: int = 12
    order: int = 8
    atol: float = 1e-8
    rtol: float = 1e-10

    def __post_init__(self):
        if not (self.base_cell > 0):
            raise DomainError("base_cell must be positive")
        if self.max_depth < 0:
            raise DomainError("max_depth must be >= 0")
        if self.order < 1:
            raise DomainError("order must be >= 1")
        if not (self.atol > 0 and self.rtol > 0):
            raise DomainError("tolerances must be positive")

    def refined(self) -> "QuadratureSpec":
        return QuadratureSpec(self.base_cell / 2, self.max_depth, self.order, self.atol, self.rtol)


@functools.lru_cache(maxsize=None)
def triangle_rule(n: int):
    """Collapsed Gauss rule on the reference triangle ``(0,0),(1,0),(0,1)``.

    Exact for polynomials of total degree ``2n - 2`` or less.
    """
    g, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (g + 1.0)
    wt = 0.5 * w
    u, v = np.meshgrid(t, t, indexing="ij")
    wu, wv = np.meshgrid(wt, wt, indexing="ij")
    xi = u.ravel()
    eta = (v * (1.0 - u)).ravel()
    weight = (wu * wv * (1.0 - u)).ravel()
    for a in (xi, eta, weight):
        a.setflags(write=False)
    return xi, eta, weight


def polygon_area(poly: Polygon) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_halfplane(poly: Polygon, a: float, b: float, c: float) -> Polygon:
    """Part of a convex polygon with ``a x + b y <= c``."""
    if len(poly) == 0:
        return poly
    out = []
    vals = poly @ np.array([a, b]) - c
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp, fq = vals[i], vals[(i + 1) % n]
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            t = fp / (fp - fq)
            out.append(p + t * (q - p))
    if len(out) < 3:
        return np.zeros((0, 2))
    return np.array(out)


def split_by_line(poly: Polygon, a: float, b: float, c: float) -> list[Polygon]:
    """Both sides of ``a x + b y = c`` (empty pieces dropped)."""
    pieces = [clip_halfplane(poly, a, b, c), clip_halfplane(poly, -a, -b, -c)]
    return [p for p in pieces if len(p) >= 3 and polygon_area(p) > 0]


def rectangle(x0: float, x1: float, y0: float, y1: float) -> Polygon:
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def film_pieces(profile: Profile, x0: float, x1: float, y0: float = 0.0,
                y1: float = math.inf) -> list[Polygon]:
    """Convex pieces of ``{x0 < x < x1, y0 < y < min(h(x), y1)}``.

    The x-range is split at the profile breakpoints so that the graph is a
    single line over each piece.
    """
    x0, x1 = max(x0, 0.0), min(x1, 1.0)
    if x1 <= x0:
        return []
    xs = np.concatenate(([x0], profile.xs[(profile.xs > x0) & (profile.xs < x1)], [x1]))
    hs = profile(xs)
    out = []
    for a, b, ha, hb in zip(xs[:-1], xs[1:], hs[:-1], hs[1:]):
        if max(ha, hb) <= y0:
            continue
        top = max(ha, hb, y0) + 1.0
        if math.isfinite(y1):
            top = min(top, y1)
        if top <= y0:
            continue
        poly = rectangle(a, b, y0, top)
        # y <= ha + (hb - ha) (x - a) / (b - a)
        slope = (hb - ha) / (b - a)
        poly = clip_halfplane(poly, -slope, 1.0, ha - slope * a)
        if len(poly) >= 3 and polygon_area(poly) > 0:
            out.append(poly)
    return out


def integrate_polygon(f: Callable, poly: Polygon, n: int) -> float:
    """Gauss rule of order ``n`` on a fan triangulation of a convex polygon.

    ``f(x, y)`` must accept arrays.
    """
    xi, eta, w = triangle_rule(n)
    p0 = poly[0]
    xs, ys, ws = [], [], []
    for i in range(1, len(poly) - 1):
        p1, p2 = poly[i], poly[i + 1]
        e1, e2 = p1 - p0, p2 - p0
        jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
        xs.append(p0[0] + xi * e1[0] + eta * e2[0])
        ys.append(p0[1] + xi * e1[1] + eta * e2[1])
        ws.append(w * jac)
    if not xs:
        return 0.0
    x, y, wt = np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)
    return float(np.dot(wt, f(x, y)))


def quadrisect(poly: Polygon) -> list[Polygon]:
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    mx, my = 0.5 * (lo + hi)
    out = []
    for piece in split_by_line(poly, 1.0, 0.0, mx):
        out.extend(split_by_line(piece, 0.0, 1.0, my))
    return out


@dataclass
class IntegralResult:
    value: float
    error: float
    cells: int
    worst: list


def cut_pieces(polys: Sequence[Polygon], lines: Sequence[tuple[float, float, float]]) -> list[Polygon]:
    """Split convex pieces along lines ``a x + b y = c``."""
    pieces = list(polys)
    for a, b, c in lines:
        nxt = []
        for p in pieces:
            vals = p @ np.array([a, b]) - c
            if vals.min() < 0 < vals.max():
                nxt.extend(split_by_line(p, a, b, c))
            else:
                nxt.append(p)
        pieces = nxt
    return pieces


def adaptive_integrate(f: Callable, pieces: Sequence[Polygon], spec: QuadratureSpec,
                       atol: float, *, raise_on_failure: bool = True) -> IntegralResult:
    """Adaptive quadrature over a union of convex pieces.

    Each piece is compared against the sum over its four quadrants; pieces
    whose difference exceeds their share of ``atol`` (proportional to area)
    are bisected further. Contributions are summed with ``math.fsum``.
    """
    total_area = sum(polygon_area(p) for p in pieces) or 1.0
    stack = []
    for p in pieces:
        stack.append((p, integrate_polygon(f, p, spec.order), 0))
    values, errors, worst = [], [], []
    cells = 0
    while stack:
        poly, coarse, depth = stack.pop()
        kids = quadrisect(poly)
        kid_vals = [integrate_polygon(f, k, spec.order) for k in kids]
        fine = math.fsum(kid_vals)
        diff = abs(fine - coarse)
        share = atol * polygon_area(poly) / total_area
        allowed = max(share, spec.rtol * abs(fine))
        cells += 1
        if diff <= allowed or depth >= spec.max_depth:
            values.append(fine)
            errors.append(diff)
            if diff > allowed:
                worst.append((poly.mean(axis=0).tolist(), diff))
            continue
        for k, v in zip(kids, kid_vals):
            stack.append((k, v, depth + 1))
    err = math.fsum(errors)
    if worst and raise_on_failure and err > atol:
        worst.sort(key=lambda t: -t[1])
        raise NumericalError(f"adaptive quadrature did not converge; worst cells {worst[:3]}",
                             residual=err)
    return IntegralResult(math.fsum(values), err, cells, worst)


def base_cells(pieces: Sequence[Polygon], size: float) -> list[Polygon]:
    """Cut pieces along a square grid of the given cell size."""
    if not pieces:
        return []
    allp = np.vstack(pieces)
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    lines = []
    for x in np.arange(math.floor(lo[0] / size) + 1, math.ceil(hi[0] / size)) * size:
        lines.append((1.0, 0.0, float(x)))
    for y in np.arange(math.floor(lo[1] / size) + 1, math.ceil(hi[1] / size)) * size:
        lines.append((0.0, 1.0, float(y)))
    return cut_pieces(pieces, lines)
