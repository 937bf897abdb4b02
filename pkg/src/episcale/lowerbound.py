"""Numerically checkable ingredients of the lower bound: distance to skew
matrices, the circulation estimate on annuli, the strip estimate and the
decomposition into local length scales."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .dislocations import DislocationMeasure
from .exceptions import DomainError, NumericalError
from .fields import ExtendedBelow, StrainField, gauss_legendre
from .geometry import Profile, largest_square
from .params import ModelParams
from .quadrature import QuadratureSpec, cut_pieces, rectangle, triangle_rule


@dataclass(frozen=True)
class SkewParam:
    """The skew matrix ``[[0, w], [-w, 0]]``."""

    w: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[0.0, self.w], [-self.w, 0.0]])


@dataclass(frozen=True)
class Rectangle:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise DomainError("rectangle needs x1 > x0 and y1 > y0")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


@dataclass(frozen=True)
class Annulus:
    cx: float
    cy: float
    r: float
    R: float

    def __post_init__(self):
        if not (0 < self.r < self.R):
            raise DomainError("annulus needs 0 < r < R")

    @property
    def area(self) -> float:
        return math.pi * (self.R**2 - self.r**2)


def _rectangle_rule(field: StrainField, dom: Rectangle, cells: int, order: int):
    xs = np.linspace(dom.x0, dom.x1, cells + 1)
    ys = np.linspace(dom.y0, dom.y1, cells + 1)
    lines = [(1.0, 0.0, float(x)) for x in xs[1:-1]] + [(0.0, 1.0, float(y)) for y in ys[1:-1]]
    pieces = cut_pieces([rectangle(dom.x0, dom.x1, dom.y0, dom.y1)], lines + field.kink_lines())
    xi, eta, w = triangle_rule(order)
    px, py, pw = [], [], []
    for poly in pieces:
        p0 = poly[0]
        for i in range(1, len(poly) - 1):
            e1, e2 = poly[i] - p0, poly[i + 1] - p0
            px.append(p0[0] + xi * e1[0] + eta * e2[0])
            py.append(p0[1] + xi * e1[1] + eta * e2[1])
            pw.append(w * abs(e1[0] * e2[1] - e1[1] * e2[0]))
    return np.concatenate(px), np.concatenate(py), np.concatenate(pw)


def _annulus_rule(dom: Annulus, panels: int, order: int, lines=()):
    """Gauss rules on dyadic radial pieces and on angular panels.

    Radial pieces also break where a kink line is tangent to a circle, and at
    each radius the angular panels break where the circle crosses a kink
    line, so every panel sees a smooth integrand.
    """
    pieces = max(1, math.ceil(math.log2(dom.R / dom.r)))
    knots = list(dom.r * (dom.R / dom.r) ** (np.arange(pieces + 1) / pieces))
    normals = []
    for a, b, c in lines:
        dist = c - a * dom.cx - b * dom.cy
        normals.append((math.atan2(b, a), dist))
        if dom.r < abs(dist) < dom.R:
            knots.append(abs(dist))
    knots = np.unique(knots)
    g, w = gauss_legendre(order)
    lo, hi = knots[:-1, None], knots[1:, None]
    radii = (0.5 * (lo + hi) + 0.5 * (hi - lo) * g).ravel()
    wr = (0.5 * (hi - lo) * w).ravel() * radii
    uniform = 2 * math.pi * np.arange(panels + 1) / panels
    xs, ys, ws = [], [], []
    for rad, wrad in zip(radii, wr):
        cuts = [(phi + s * math.acos(dist / rad)) % (2 * math.pi)
                for phi, dist in normals if abs(dist) < rad for s in (-1.0, 1.0)]
        th = np.unique(np.concatenate([uniform, cuts]))
        a, b = th[:-1, None], th[1:, None]
        t = (0.5 * (a + b) + 0.5 * (b - a) * g).ravel()
        xs.append(dom.cx + rad * np.cos(t))
        ys.append(dom.cy + rad * np.sin(t))
        ws.append(wrad * (0.5 * (b - a) * w).ravel())
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)


def _skew_integrals(field: StrainField, dom, rtol: float, max_levels: int = 5):
    """``int |H|^2``, ``int (H12 - H21)`` and an error estimate, refining the
    rule until successive values agree to ``rtol``."""
    prev = None
    lines = field.kink_lines()
    for level in range(max_levels):
        if isinstance(dom, Rectangle):
            x, y, w = _rectangle_rule(field, dom, 2**level, 6)
        else:
            x, y, w = _annulus_rule(dom, 4 * 2**level, 6 + 2 * level, lines)
        H = field(x, y)
        norm2 = math.fsum(w * np.sum(H**2, axis=(-1, -2)))
        skew = math.fsum(w * (H[..., 0, 1] - H[..., 1, 0]))
        if prev is not None:
            err = max(abs(norm2 - prev[0]), abs(skew - prev[1]) * abs(skew) / max(dom.area, 1e-300))
            if err <= rtol * max(abs(norm2), 1e-300):
                return norm2, skew, err
        prev = (norm2, skew)
    raise NumericalError("skew-distance quadrature did not converge",
                         residual=abs(norm2 - prev[0]) if prev else math.nan)


@dataclass(frozen=True)
class SkewDistance:
    w_star: float
    value: float
    error: float


def min_over_skew(field: StrainField, domain: Rectangle | Annulus,
                  quad: QuadratureSpec | None = None, rtol: float = 1e-8) -> SkewDistance:
    """``min_w int |H - [[0, w], [-w, 0]]|^2``.

    The minimiser is the mean of ``(H12 - H21)/2``, and the minimum equals
    ``int |H|^2 - 2 w*^2 |domain|``.
    """
    norm2, skew, err = _skew_integrals(field, domain, rtol)
    area = domain.area
    w_star = 0.5 * skew / area
    value = max(norm2 - 2.0 * w_star**2 * area, 0.0)
    return SkewDistance(w_star, value, err)


@dataclass(frozen=True)
class BoundResult:
    lhs: float
    rhs: float
    holds: bool | None
    applicable: bool = True
    detail: str = ""


def annulus_circulation_bound(field: StrainField, center, r: float, R: float,
                              sigma: DislocationMeasure, quad: QuadratureSpec | None = None,
                              tol: float = 1e-6, rtol: float = 1e-4) -> BoundResult:
    """``min_skew int_{B_R \\ B_r} |H - W|^2 >= log(R/r)/(2 pi) (b n)^2``
    with ``n`` the number of cores whose mollifier support lies in ``B_r``."""
    dom = Annulus(float(center[0]), float(center[1]), r, R)
    n = 0
    for x, y in sigma.cores:
        dist = math.hypot(x - dom.cx, y - dom.cy)
        if dist + sigma.r0 <= r:
            n += 1
        elif dist - sigma.r0 < R:
            raise DomainError(f"core at ({x!r}, {y!r}) has mollifier mass inside the annulus")
    rhs = math.log(R / r) / (2 * math.pi) * (sigma.b * n) ** 2
    lhs = min_over_skew(field, dom, quad, rtol).value
    return BoundResult(lhs, rhs, lhs >= rhs * (1 - tol))


def _edge_breaks(ax, ay, bx, by, lines, pieces: int) -> np.ndarray:
    """Parameters in ``[0, 1]`` splitting an edge uniformly and where it
    crosses a cut line of the field."""
    ts = list(np.linspace(0.0, 1.0, pieces + 1))
    for a, b, c in lines:
        den = a * (bx - ax) + b * (by - ay)
        if den != 0:
            t = (c - a * ax - b * ay) / den
            if 0 < t < 1:
                ts.append(t)
    return np.unique(ts)


def boundary_circulation(field: StrainField, dom: Rectangle, order: int = 16,
                         pieces: int = 8) -> float:
    """Counterclockwise ``int H_1 . tau`` around a rectangle, i.e. the curl
    mass of the first row inside it. Edges are split where they cross the
    field's cut lines so every Gauss panel sees a smooth integrand."""
    g, w = gauss_legendre(order)
    lines = field.kink_lines()
    total = []
    corners = [(dom.x0, dom.y0), (dom.x1, dom.y0), (dom.x1, dom.y1), (dom.x0, dom.y1)]
    for (ax, ay), (bx, by) in zip(corners, corners[1:] + corners[:1]):
        ts = _edge_breaks(ax, ay, bx, by, lines, pieces)
        lo, hi = ts[:-1, None], ts[1:, None]
        t = 0.5 * (lo + hi) + 0.5 * (hi - lo) * g
        wt = 0.5 * (hi - lo) * w
        x = ax + (bx - ax) * t
        y = ay + (by - ay) * t
        h11, h12 = field.first_row(x.ravel(), y.ravel())
        total.append(math.fsum(wt.ravel() * (h11 * (bx - ax) + h12 * (by - ay))))
    return math.fsum(total)


def strip_lower_bound_check(field: StrainField, x_i: float, l_i: float, x_bar: float,
                            e0: float, quad: QuadratureSpec | None = None,
                            tol: float = 1e-6, rtol: float = 1e-6) -> BoundResult:
    """Strip estimate ``min_skew int |H - W|^2 >= e0^2 l^2 / 768`` on
    ``(x_bar, 2 x_i + l - x_bar) x (0, l/2)``.

    Applies only when the curl mass of the first row in the square
    ``(x_i, x_i + l) x (0, l)`` is below ``e0 l / 4``; otherwise the result is
    marked not applicable and ``holds`` is ``None``.
    """
    if not (l_i > 0):
        raise DomainError("l_i must be positive")
    if not (x_i < x_bar < x_i + l_i / 8):
        raise DomainError("x_bar must lie in (x_i, x_i + l_i/8)")
    ext = ExtendedBelow(field, e0)
    curl_mass = abs(boundary_circulation(ext, Rectangle(x_i, x_i + l_i, 0.0, l_i)))
    rhs = e0**2 * l_i**2 / 768.0
    if not curl_mass < e0 * l_i / 4:
        return BoundResult(math.nan, rhs, None, False,
                           f"curl mass {curl_mass:.6g} >= e0 l/4 = {e0 * l_i / 4:.6g}")
    strip = Rectangle(x_bar, 2 * x_i + l_i - x_bar, 0.0, l_i / 2)
    lhs = min_over_skew(ext, strip, quad, rtol).value
    return BoundResult(lhs, rhs, lhs >= rhs * (1 - tol), True, f"curl mass {curl_mass:.6g}")


# --- local length scales ---------------------------------------------------------

#: Offset of the first segment from the left edge of each support component.
START_OFFSET = 1e-9


@dataclass(frozen=True)
class Segment:
    x: float
    length: float
    kind: str  # "l_h" or "l_d"
    volume: float
    cores: int


@dataclass(frozen=True)
class SegmentDecomposition:
    segments: tuple

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    @property
    def total_volume(self) -> float:
        return math.fsum(s.volume for s in self.segments)

    def to_csv(self, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write(header)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x_i", "l_i", "kind", "d_i", "cores"])
        for s in self.segments:
            w.writerow([repr(s.x), repr(s.length), s.kind, repr(s.volume), s.cores])
        return buf.getvalue()


def core_cap(params: ModelParams) -> float:
    """``log(b/(e0 r0))^2``, the number of cores allowed per segment."""
    return params.log_ratio**2


def decompose_local_scales(profile: Profile, sigma: DislocationMeasure, params: ModelParams,
                           rtol: float = 1e-12, max_segments: int = 1_000_000) -> SegmentDecomposition:
    """Split each component of the support into segments of length
    ``min(l_h, l_d)``.

    ``l_h`` is the side of the largest square ``[x, x+l) x (0, l)`` under the
    graph and ``l_d`` the largest length whose vertical strip holds at most
    ``log(b/(e0 r0))^2`` cores; ties count as ``l_h``. Segments start
    ``1e-9`` right of each left support edge and stop once the remaining length
    drops below ``rtol`` times the component length (near a ramp the steps
    shrink geometrically and never reach the edge exactly).
    """
    cap = core_cap(params)
    xs_core = np.sort(np.array([x for x, _ in sigma.cores], dtype=float))
    allowed = math.floor(cap)
    segments = []
    for a, c in profile.support():
        x = a + START_OFFSET
        stop = c - rtol * (c - a)
        while x < stop:
            lh = largest_square(profile, x)
            first = int(np.searchsorted(xs_core, x, side="left"))
            if first + allowed < xs_core.size:
                ld = float(xs_core[first + allowed]) - x
            else:
                ld = 1.0 - x
            if ld <= 0:
                raise DomainError(f"more than {allowed} cores on the vertical line x={x!r}")
            if lh <= 0:
                break
            kind = "l_h" if lh <= ld else "l_d"
            length = min(lh, ld)
            end = x + length
            cores = int(np.searchsorted(xs_core, end, side="left") - first)
            segments.append(Segment(x, length, kind, profile.integral(x, min(end, 1.0)), cores))
            if len(segments) > max_segments:
                raise NumericalError("too many segments; the profile edge is too shallow")
            x = end
    return SegmentDecomposition(tuple(segments))
