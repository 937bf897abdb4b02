"""Strain-field evaluators.

Every field maps points of the plane to real 2x2 matrices whose second row
vanishes. Evaluation is vectorised: ``field(x, y)`` accepts broadcastable
arrays and returns an array of shape ``broadcast(x, y).shape + (2, 2)``.
"""

from __future__ import annotations

import csv
import enum
import functools
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .dislocations import MollifierSpec
from .exceptions import DomainError
from .params import ModelParams


@functools.lru_cache(maxsize=None)
def gauss_legendre(n: int):
    """Cached Gauss-Legendre nodes and weights on [-1, 1] (read-only)."""
    g, w = np.polynomial.legendre.leggauss(n)
    g.setflags(write=False)
    w.setflags(write=False)
    return g, w


def _pack(h11, h12):
    h11, h12 = np.broadcast_arrays(np.asarray(h11, float), np.asarray(h12, float))
    out = np.zeros(h11.shape + (2, 2))
    out[..., 0, 0] = h11
    out[..., 0, 1] = h12
    return out


class StrainField:
    """Base class. Subclasses implement :meth:`first_row`."""

    def first_row(self, x, y):
        raise NotImplementedError

    def __call__(self, x, y):
        return _pack(*self.first_row(x, y))

    def sym_norm2(self, x, y):
        """``|H_sym|^2 = H11^2 + H12^2 / 2`` (the second row is zero)."""
        h11, h12 = self.first_row(x, y)
        return h11**2 + 0.5 * h12**2

    def cut_lines(self) -> list[tuple[float, float, float]]:
        """Lines ``a x + b y = c`` across which the field may jump."""
        return []

    def kink_lines(self) -> list[tuple[float, float, float]]:
        """Lines near which the field varies abruptly; quadrature rules split
        there. Defaults to :meth:`cut_lines`."""
        return self.cut_lines()

    @property
    def scale(self) -> float:
        """Typical magnitude, used to make tolerances relative."""
        return 1.0


@dataclass(frozen=True)
class ZeroField(StrainField):
    def first_row(self, x, y):
        z = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        return z, z.copy()


@dataclass(frozen=True)
class ConstantMisfit(StrainField):
    """``[[e0, 0], [0, 0]]`` everywhere."""

    e0: float

    def first_row(self, x, y):
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        return np.full(shape, float(self.e0)), np.zeros(shape)

    @property
    def scale(self) -> float:
        return abs(self.e0)


@dataclass(frozen=True)
class ConstantMatrix(StrainField):
    """An arbitrary constant matrix (its second row need not vanish)."""

    matrix: tuple

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2, 2):
            raise DomainError("ConstantMatrix needs a 2x2 matrix")
        object.__setattr__(self, "matrix", tuple(map(tuple, m.tolist())))

    def first_row(self, x, y):
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        return np.full(shape, self.matrix[0][0]), np.full(shape, self.matrix[0][1])

    def __call__(self, x, y):
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        return np.broadcast_to(np.array(self.matrix), shape + (2, 2)).copy()

    def sym_norm2(self, x, y):
        m = np.array(self.matrix)
        sym = 0.5 * (m + m.T)
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        return np.full(shape, float(np.sum(sym**2)))

    @property
    def scale(self) -> float:
        return float(np.abs(self.matrix).max()) or 1.0


@dataclass(frozen=True)
class DislocationFree(StrainField):
    """``[[e0 (1 - y/L), -e0 x / L], [0, 0]]`` for ``y <= L`` and zero above."""

    L: float
    e0: float

    def __post_init__(self):
        if not (self.L > 0):
            raise DomainError(f"L must be positive, got {self.L!r}")

    def first_row(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        below = y <= self.L
        h11 = np.where(below, self.e0 * (1.0 - y / self.L), 0.0)
        h12 = np.where(below, -self.e0 * x / self.L, 0.0)
        return h11, h12

    def displacement(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.where(y <= self.L, self.e0 * x * (1.0 - y / self.L), 0.0)

    def cut_lines(self):
        return [(0.0, 1.0, self.L)]

    @property
    def scale(self) -> float:
        return abs(self.e0) * max(1.0, 1.0 / self.L)


def gz_field(x, y, field: DislocationFree):
    return field(x, y)


@dataclass(frozen=True)
class ExtendedBelow(StrainField):
    """``base`` for ``y >= 0`` and ``[[e0, 0], [0, 0]]`` below the substrate."""

    base: StrainField
    e0: float

    def first_row(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        h11, h12 = self.base.first_row(x, y)
        below = y < 0
        return np.where(below, self.e0, h11), np.where(below, 0.0, h12)

    def cut_lines(self):
        return [(0.0, 1.0, 0.0)] + list(self.base.cut_lines())

    def kink_lines(self):
        return [(0.0, 1.0, 0.0)] + list(self.base.kink_lines())

    @property
    def scale(self) -> float:
        return max(abs(self.e0), self.base.scale)


class RegionLabel(enum.Enum):
    A = "A"
    B = "B"
    C = "C"


def classify_region(x: float, y: float, params: ModelParams) -> RegionLabel:
    """Region of a point of the reference cell ``(0, b/e0] x R``."""
    p = params.period
    if not (0 < x <= p):
        raise DomainError(f"x = {x!r} is outside the reference cell (0, {p!r}]")
    slope = params.r0 / p
    if y <= slope * x:
        return RegionLabel.A
    if y < (slope - 1.0) * x + p:
        return RegionLabel.B
    return RegionLabel.C


@dataclass(frozen=True)
class Segment:
    """Straight interface piece from ``(ax, ay)`` to ``(bx, by)``."""

    ax: float
    ay: float
    bx: float
    by: float

    def distance(self, px: float, py: float) -> float:
        dx, dy = self.bx - self.ax, self.by - self.ay
        n2 = dx * dx + dy * dy
        t = 0.0 if n2 == 0 else min(1.0, max(0.0, ((px - self.ax) * dx + (py - self.ay) * dy) / n2))
        return math.hypot(self.ax + t * dx - px, self.ay + t * dy - py)


@dataclass(frozen=True)
class PeriodicDislocation(StrainField):
    """Piecewise field of the dislocation construction.

    Left of ``x0 = (k-1) b/e0`` it is the ``b/e0``-periodic field built from
    the three regions A (uniform misfit), B (fan ending at a core) and C
    (stress free). Right of ``x0`` it is the dislocation-free wedge field.
    The periodic part is used on the whole half-plane ``x <= x0``.
    """

    params: ModelParams
    k: int
    L: float

    @property
    def period(self) -> float:
        return self.params.period

    @property
    def junction(self) -> float:
        return (self.k - 1) * self.period

    def _cell_coordinate(self, x):
        p = self.period
        return x - p * (np.ceil(x / p) - 1.0)

    def first_row(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        e0, p, r0 = self.params.e0, self.period, self.params.r0
        rho = r0 / p
        periodic = x <= self.junction
        xr = self._cell_coordinate(x)
        in_a = y <= rho * xr
        in_b = ~in_a & (y < (rho - 1.0) * xr + p) & (xr < p)
        gap = np.where(in_b, p - xr, 1.0)
        eta = (rho - 1.0) * xr + p - y
        b11 = e0 * (eta * p + (rho - 1.0) * xr * gap) / gap**2
        b12 = -e0 * xr / gap
        m11 = np.where(in_a, e0, np.where(in_b, b11, 0.0))
        m12 = np.where(in_b, b12, 0.0)
        s = x - self.junction
        n11 = np.where((y <= 0) | (y < s), e0, 0.0)
        n12 = np.where((y > 0) & (y < s), -e0, 0.0)
        return np.where(periodic, m11, n11), np.where(periodic, m12, n12)

    def displacement(self, x, y):
        """First component of the potential; jumps by ``-b`` across each
        defect line ``{i b/e0} x (-inf, r0)``."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        e0, p, r0 = self.params.e0, self.period, self.params.r0
        rho = r0 / p
        xr = self._cell_coordinate(x)
        in_a = y <= rho * xr
        eta = (rho - 1.0) * xr + p - y
        # at xr = p the fan has zero width; rounding must not select it
        in_b = ~in_a & (eta > 0) & (xr < p)
        gap = np.where(in_b, p - xr, 1.0)
        um = np.where(in_a, e0 * xr, np.where(in_b, e0 * xr * eta / gap, 0.0))
        s = x - self.junction
        un = np.where(y <= 0, e0 * s, np.where(y < s, e0 * (s - y), 0.0))
        return np.where(x <= self.junction, um, un)

    def cores(self, xmin: float, xmax: float) -> list[tuple[float, float]]:
        """Points ``(i b/e0, r0)`` with ``i b/e0 <= x0`` inside ``[xmin, xmax]``."""
        p = self.period
        lo = math.ceil(xmin / p - 1e-12)
        hi = min(math.floor(xmax / p + 1e-12), self.k - 1)
        return [(i * p, self.params.r0) for i in range(lo, hi + 1)]

    def interfaces(self, xmin: float, xmax: float, ymin: float, ymax: float) -> list[Segment]:
        """Lines across which the potential has a kink or a jump, restricted to
        a window (segments reaching beyond it are truncated to its extent)."""
        p, r0, x0 = self.period, self.params.r0, self.junction
        lo_y = min(ymin, 0.0) - 1.0
        segs = []
        first = math.floor(xmin / p) - 1
        last = math.floor(xmax / p) + 1
        for i in range(first, last + 1):
            a = i * p
            if a >= x0 - 1e-12 * p:
                break
            segs.append(Segment(a, 0.0, a + p, r0))
            segs.append(Segment(a + p, r0, a, p))
        for i in range(first, last + 1):
            a = i * p
            if a <= x0 + 1e-12 * p:
                segs.append(Segment(a, lo_y, a, p))
        if xmax > x0:
            reach = max(xmax - x0, ymax, 0.0) + 1.0
            segs.append(Segment(x0, 0.0, x0 + reach, 0.0))
            segs.append(Segment(x0, 0.0, x0 + reach, reach))
        return [s for s in segs if not (max(s.ax, s.bx) < xmin or min(s.ax, s.bx) > xmax
                                        or max(s.ay, s.by) < ymin or min(s.ay, s.by) > ymax)]

    def cut_lines(self):
        """Full lines through every interface of the cells ``-1 .. k-1`` and of
        the wedge; the count grows linearly with ``k``."""
        p = self.period
        lines = set()
        for s in self.interfaces(-p, self.junction + p, -1.0, 1.0):
            dx, dy = s.bx - s.ax, s.by - s.ay
            n = math.hypot(dx, dy)
            a, b = dy / n, -dx / n
            if a < 0 or (a == 0 and b < 0):
                a, b = -a, -b
            lines.add((a, b, a * s.ax + b * s.ay))
        return sorted(lines)

    @property
    def scale(self) -> float:
        return self.params.e0

    def column_energy(self, x, y1, y2):
        """``int_{y1}^{y2} |H_sym|^2 dy`` at abscissae ``x``, in closed form.

        In a fan column ``H11`` is affine in ``y`` and ``H12`` constant, so
        every region contributes a polynomial antiderivative. Diverges as a
        column approaches a core from the left; callers keep away from cores.
        """
        x, y1, y2 = np.broadcast_arrays(*(np.asarray(a, float) for a in (x, y1, y2)))
        e0, p, r0 = self.params.e0, self.period, self.params.r0
        rho = r0 / p
        lo, hi = np.minimum(y1, y2), y2
        xr = self._cell_coordinate(x)
        ya = rho * xr
        yb = (rho - 1.0) * xr + p
        gap = np.maximum(p - xr, np.finfo(float).tiny)
        part_a = np.clip(np.minimum(hi, ya) - lo, 0.0, None)
        b_lo = np.maximum(lo, ya)
        b_hi = np.minimum(hi, yb)
        in_b = b_hi > b_lo
        alpha = e0 * p / gap**2
        beta = e0 * (rho - 1.0) * xr / gap
        h12 = -e0 * xr / gap
        # eta = yb - y runs from yb - b_hi to yb - b_lo
        f_hi = alpha * (yb - b_lo) + beta
        f_lo = alpha * (yb - b_hi) + beta
        part_b = np.where(in_b, (f_hi**3 - f_lo**3) / (3.0 * alpha)
                          + 0.5 * h12**2 * (b_hi - b_lo), 0.0)
        periodic = e0**2 * part_a + part_b
        s = x - self.junction
        below = np.clip(np.minimum(hi, 0.0) - lo, 0.0, None)
        wedge = np.clip(np.minimum(hi, s) - np.maximum(lo, 0.0), 0.0, None)
        tail = e0**2 * below + 1.5 * e0**2 * wedge
        return np.where(x <= self.junction, periodic, tail)

    def defect_lines(self, xmin: float, xmax: float) -> list[float]:
        """Abscissae of the defect lines ``{x} x (-inf, r0)`` in a window."""
        return [x for x, _ in self.cores(xmin, xmax)]

    def constant_value(self, px: float, py: float, radius: float):
        """If the field is constant on the disk ``B_radius(P)`` return that
        constant first row, else ``None``."""
        if any(s.distance(px, py) < radius
               for s in self.interfaces(px - radius, px + radius, py - radius, py + radius)):
            return None
        h11, h12 = self.first_row(np.array(px), np.array(py))
        if px <= self.junction:
            xr = float(self._cell_coordinate(np.array(px)))
            rho = self.params.r0 / self.period
            in_b = (py > rho * xr) and (py < (rho - 1.0) * xr + self.period)
            if in_b:
                return None
        return float(h11), float(h12)


def hat_H(x, y, field: PeriodicDislocation):
    return field(x, y)


def singular_points(field: PeriodicDislocation, xmin: float, xmax: float):
    return field.cores(xmin, xmax)


# --- mollification -----------------------------------------------------------

#: Rays are parametrised by ``v = log(r0 / (r0 - r))``; beyond ``RIM_SPAN``
#: the bump is below 1e-13 of its peak and is dropped.
RIM_SPAN = math.log(60.0)


#: Narrowest angular panel the bisection will split further.
MIN_PANEL = 1e-11

#: Multiples of the passing distance used as radial knots near a core.
CORE_GRADING = np.array([1.0, 4.0, 16.0])


def _radial_rule(a, b, r0, g, w):
    """Gauss rule in the rim variable ``v`` on each radial piece ``[a, b]``.

    The bump vanishes to all orders at ``r0``; in ``v`` it decays doubly
    exponentially, which keeps Gauss-Legendre spectrally accurate on pieces
    touching or approaching the rim.
    """
    with np.errstate(divide="ignore"):
        va = np.minimum(np.log(r0 / (r0 - a)), RIM_SPAN)
        vb = np.minimum(np.log(r0 / np.maximum(r0 - b, 0.0)), RIM_SPAN)
    hv = 0.5 * (vb - va)
    v = (0.5 * (va + vb))[..., None] + hv[..., None] * g
    q = r0 * np.exp(-v)
    return r0 - q, hv[..., None] * w * q


def _ray_crossings(px, py, cos_t, sin_t, segs, rmax):
    """Radii in (0, rmax) where rays from P cross each segment; ``rmax`` where
    they do not. Shapes: (n_rays, n_segs)."""
    out = np.full((cos_t.size, len(segs)), rmax)
    for j, s in enumerate(segs):
        ex, ey = s.bx - s.ax, s.by - s.ay
        wx, wy = s.ax - px, s.ay - py
        den = cos_t * ey - sin_t * ex
        with np.errstate(divide="ignore", invalid="ignore"):
            r = (wx * ey - wy * ex) / den
            t = (wx * sin_t - wy * cos_t) / den
        ok = (den != 0) & (r > 0) & (r < rmax) & (t >= 0) & (t <= 1)
        out[ok, j] = r[ok]
    return out


def _circle_angles(px, py, seg: Segment, radius):
    """Angles (seen from P) of segment endpoints inside the disk and of the
    segment's intersections with the circle."""
    angles = []
    for qx, qy in ((seg.ax, seg.ay), (seg.bx, seg.by)):
        if math.hypot(qx - px, qy - py) < radius:
            angles.append(math.atan2(qy - py, qx - px))
    ex, ey = seg.bx - seg.ax, seg.by - seg.ay
    wx, wy = seg.ax - px, seg.ay - py
    length = math.hypot(ex, ey)
    if length == 0:
        return angles
    ux, uy = ex / length, ey / length
    # work from the foot of the perpendicular: segments are often far longer
    # than the radius, and |w|^2 - radius^2 would cancel
    dist = wx * uy - wy * ux
    if abs(dist) >= radius:
        return angles
    half = math.sqrt((radius - dist) * (radius + dist))
    foot = -(wx * ux + wy * uy)
    for sign in (-1.0, 1.0):
        t = (foot + sign * half) / length
        if 0 <= t <= 1:
            angles.append(math.atan2(-dist * ux + sign * half * uy,
                                     dist * uy + sign * half * ux))
    return angles


def _rim_rule(start, rim, n):
    """Nodes and weights on the interval between ``start`` and ``rim`` where
    the mollifier vanishes to all orders at ``rim``. Broadcasts over
    ``start``/``rim``; the node axis is last."""
    g, w = gauss_legendre(n)
    v = 0.5 * RIM_SPAN * (g + 1.0)
    decay = np.exp(-v)
    start = np.asarray(start, float)[..., None]
    rim = np.asarray(rim, float)[..., None]
    nodes = rim - (rim - start) * decay
    weights = 0.5 * RIM_SPAN * w * np.abs(rim - start) * decay
    return nodes, weights


@dataclass
class MollifiedValue:
    h11: float
    h12: float
    error: float
    panels: int
    converged: bool


@dataclass(frozen=True)
class Mollified(StrainField):
    """``base * J_r0`` evaluated by a polar product Gauss rule.

    The convolution is computed after an integration by parts: the first row
    equals ``u * grad J`` plus ``b`` times the mollifier mass along each
    defect line, where ``u`` is the bounded potential of the base field.
    Rays are split where they cross the base field's interfaces; the angular
    range is split at interface endpoints and where interfaces leave the
    disk, then bisected adaptively until the panel sums agree to
    ``rtol * max(e0, b/r0)``. With ``adaptive=False`` a single pass over the
    initial panels is made and no error estimate is available.
    """

    base: PeriodicDislocation
    spec: MollifierSpec
    order: int = 24
    rtol: float = 1e-8
    max_depth: int = 40
    adaptive: bool = True

    def __post_init__(self):
        if self.order < 4:
            raise DomainError("convolution quadrature order must be at least 4")

    @property
    def scale(self) -> float:
        prm = self.base.params
        return max(prm.e0, prm.b / self.spec.r0)

    def cut_lines(self):
        return []

    def kink_lines(self):
        # smooth, but it changes on the scale r0 around the base interfaces
        return self.base.cut_lines()

    @property
    def support_height(self) -> float:
        """Above ``4 b/e0`` the mollified field vanishes identically."""
        return 4.0 * self.base.period

    def evaluate(self, px: float, py: float) -> MollifiedValue:
        r0 = self.spec.r0
        if py >= self.support_height:
            return MollifiedValue(0.0, 0.0, 0.0, 0, True)
        const = self.base.constant_value(px, py, r0)
        if const is not None:
            return MollifiedValue(const[0], const[1], 0.0, 0, True)
        segs = [s for s in self.base.interfaces(px - r0, px + r0, py - r0, py + r0)
                if s.distance(px, py) < r0]
        breaks = self._angular_breaks(px, py, segs)
        lo, hi = breaks[:-1], breaks[1:]
        vals = self._panels(px, py, segs, lo, hi)
        if not self.adaptive:
            h11, h12 = vals.sum(axis=0)
            h11 += self.base.params.b * self._defect_mass(px, py)
            return MollifiedValue(float(h11), float(h12), math.nan, lo.size, True)
        tol = self.rtol * self.scale
        total = np.zeros(2)
        err = 0.0
        used = 0
        converged = True
        for depth in range(self.max_depth + 1):
            mid = 0.5 * (lo + hi)
            kids = self._panels(px, py, segs, np.concatenate([lo, mid]), np.concatenate([mid, hi]))
            m = lo.size
            left, right = kids[:m], kids[m:]
            diff = np.abs(left + right - vals).max(axis=1)
            # below MIN_PANEL the ray angles themselves are not resolved
            ok = (diff <= tol * (hi - lo) / (2 * math.pi)) | (hi - lo <= MIN_PANEL)
            if depth == self.max_depth:
                ok[:] = True
                converged = bool(np.all(diff <= tol * (hi - lo) / (2 * math.pi)))
            total += (left + right)[ok].sum(axis=0)
            err += float(diff[ok].sum())
            used += 2 * int(ok.sum())
            keep = ~ok
            if not keep.any():
                break
            lo = np.concatenate([lo[keep], mid[keep]])
            hi = np.concatenate([mid[keep], hi[keep]])
            vals = np.concatenate([left[keep], right[keep]])
        if not converged:
            warnings.warn(f"convolution at ({px:.6g}, {py:.6g}) reached the bisection limit "
                          f"with error {err:.3g}", RuntimeWarning, stacklevel=2)
        h11 = total[0] + self.base.params.b * self._defect_mass(px, py)
        return MollifiedValue(float(h11), float(total[1]), err, used, converged)

    def _angular_breaks(self, px, py, segs):
        r0 = self.spec.r0
        angles = []
        for s in segs:
            exits = _circle_angles(px, py, s, r0)
            angles.extend(exits)
            # a ray at angle phi to a nearby interface crosses it at radius
            # dist/sin(phi): grade geometrically from the exit angle outward
            dist = s.distance(px, py)
            if dist <= 0:
                continue
            along = math.atan2(s.by - s.ay, s.bx - s.ax)
            for c in exits:
                off = math.remainder(c - along, math.pi)
                phi = abs(off)
                if phi <= 0:
                    continue
                step = math.copysign(1.0, off)
                phi *= 4.0
                while phi < 0.25 * math.pi:
                    angles.append(c + step * (phi - abs(off)))
                    phi *= 4.0
        if not angles:
            return np.linspace(0.0, 2 * math.pi, 5)
        a = np.unique(np.mod(angles, 2 * math.pi))
        a = np.append(a, a[0] + 2 * math.pi)
        # panels wider than a quarter turn are split evenly
        out = [a[0]]
        for lo, hi in zip(a[:-1], a[1:]):
            parts = max(1, math.ceil((hi - lo) / (0.5 * math.pi)))
            out.extend(lo + (hi - lo) * np.arange(1, parts + 1) / parts)
        return np.array(out)

    def _panels(self, px, py, segs, lo, hi):
        """Integral of ``-u(P + r w) J'(r) r w`` over each angular panel;
        shape ``(n_panels, 2)``."""
        r0 = self.spec.r0
        n = self.order
        g, w = gauss_legendre(n)
        half = 0.5 * (hi - lo)
        theta = ((0.5 * (hi + lo))[:, None] + half[:, None] * g[None, :]).ravel()
        wtheta = (half[:, None] * w[None, :]).ravel()
        c, s = np.cos(theta), np.sin(theta)
        pieces = [np.zeros((theta.size, 1)), _ray_crossings(px, py, c, s, segs, r0),
                  np.full((theta.size, 1), r0)]
        # rays passing close to a core see a near-pole of u: grade the knots
        # geometrically around the point of closest approach
        for qx, qy in self.base.cores(px - 2 * r0, px + 2 * r0):
            if math.hypot(qx - px, qy - py) >= 1.5 * r0:
                continue
            along = (qx - px) * c + (qy - py) * s
            perp = np.abs((qx - px) * s - (qy - py) * c)[:, None]
            offsets = perp * CORE_GRADING[None, :]
            pieces.append(np.clip(np.concatenate([along[:, None] - offsets, along[:, None],
                                                  along[:, None] + offsets], axis=1), 0.0, r0))
        knots = np.sort(np.concatenate(pieces, axis=1), axis=1)
        r, wr = _radial_rule(knots[:, :-1], knots[:, 1:], r0, g, w)
        x = px + r * c[:, None, None]
        y = py + r * s[:, None, None]
        u = self.base.displacement(x, y)
        inner = (self.spec.radial_derivative(r) * r * wr * u).sum(axis=(1, 2))
        f11 = -(wtheta * c * inner).reshape(lo.size, n).sum(axis=1)
        f12 = -(wtheta * s * inner).reshape(lo.size, n).sum(axis=1)
        return np.stack([f11, f12], axis=1)

    def _defect_mass(self, px, py):
        """Mollifier mass on the defect lines crossing the disk around P."""
        r0 = self.spec.r0
        n = 2 * self.order
        g, w = gauss_legendre(n)
        cap = self.base.params.r0
        total = 0.0
        for xd in self.base.defect_lines(px - r0, px + r0):
            a = px - xd
            if abs(a) >= r0:
                continue
            half = math.sqrt(r0 * r0 - a * a)
            # chord parameter t = y - py in (-half, half), cut at the core
            for lo, hi in ((-half, 0.0), (0.0, half)):
                top = min(hi, cap - py)
                if top <= lo:
                    continue
                if lo == -half:
                    t, wt = _rim_rule(top, -half, n)
                elif top == hi:
                    t, wt = _rim_rule(lo, half, n)
                else:
                    t = 0.5 * (top + lo) + 0.5 * (top - lo) * g
                    wt = 0.5 * (top - lo) * w
                total += float(np.sum(wt * self.spec.radial(np.hypot(a, t))))
        return total

    def first_row(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        h11 = np.empty(x.shape)
        h12 = np.empty(x.shape)
        for idx in np.ndindex(x.shape):
            v = self.evaluate(float(x[idx]), float(y[idx]))
            h11[idx], h12[idx] = v.h11, v.h12
        return h11, h12


def mollified_H(x, y, field: Mollified):
    return field(x, y)


# --- pointwise estimate and sampling ------------------------------------------------

@dataclass(frozen=True)
class PointwiseBound:
    value: float
    bound: float
    ratio: float


def pointwise_majorant(x: float, y: float, params: ModelParams) -> float:
    """``b/r0`` on ``S = U_i B_2r0((i b/e0, r0))``, ``b/dist`` to the core
    lattice elsewhere below ``4 b/e0``, plus ``e0`` below ``4 b/e0``; zero
    above."""
    p, r0, b, e0 = params.period, params.r0, params.b, params.e0
    if y >= 4 * p:
        return 0.0
    i = round(x / p)
    dist = min(math.hypot(x - j * p, y - r0) for j in (i - 1, i, i + 1))
    core_term = b / r0 if dist < 2 * r0 else b / dist
    return core_term + e0


def verify_pointwise_bound(point, field: Mollified, fitted_C: float) -> PointwiseBound:
    """Compare ``|H(point)|`` with ``fitted_C`` times the majorant."""
    x, y = map(float, point)
    prm = field.base.params
    if y >= 4 * prm.period:
        return PointwiseBound(0.0, 0.0, 0.0)
    h11, h12 = field.first_row(np.array(x), np.array(y))
    value = math.hypot(float(h11), float(h12))
    bound = fitted_C * pointwise_majorant(x, y, prm)
    return PointwiseBound(value, bound, value / bound)


def field_samples_csv(field: StrainField, xs, ys, header: str | None = None) -> str:
    """Tensor-grid samples as ``x,y,H11,H12,H21,H22`` rows (x varies slowest)."""
    buf = io.StringIO()
    if header:
        buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "H11", "H12", "H21", "H22"])
    X, Y = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float), indexing="ij")
    H = field(X.ravel(), Y.ravel())
    for x, y, m in zip(X.ravel(), Y.ravel(), H):
        w.writerow([repr(float(v)) for v in (x, y, m[0, 0], m[0, 1], m[1, 0], m[1, 1])])
    return buf.getvalue()


def calibrate_pointwise_constant(field: Mollified, points, refine: int = 8) -> float:
    """Smallest constant making the majorant hold on ``points``, sharpened by
    a local maximisation of the ratio started from the ``refine`` worst points.

    The sample maximum alone is a biased estimate of the supremum; the local
    search moves it to a nearby local maximum, staying inside the bounding box
    of the calibration points.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.size == 0:
        return 1.0
    lo, hi = pts.min(axis=0), pts.max(axis=0)

    def ratio(q):
        q = np.clip(q, lo, hi)
        return verify_pointwise_bound(q, field, 1.0).ratio

    raw = np.array([ratio(q) for q in pts])
    best = float(raw.max())
    span = hi - lo
    for i in np.argsort(raw)[::-1][:refine]:
        res = optimize.minimize(lambda q: -ratio(q), pts[i], method="Nelder-Mead",
                                options={"xatol": 1e-6 * float(span.max()), "fatol": 1e-9,
                                         "initial_simplex": pts[i] + np.array(
                                             [[0, 0], [0.01 * span[0], 0], [0, 0.01 * span[1]]])})
        best = max(best, -float(res.fun))
    return best
