"""Piecewise-linear film profiles and the film domain below their graph.

All profile integrals are evaluated in closed form segment by segment; no
quadrature is involved anywhere in this module.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DomainError
from .params import ModelParams


@dataclass(frozen=True)
class Profile:
    """Continuous piecewise-linear height ``h`` on ``[0, 1]``.

    ``xs`` must start at 0, end at 1 and increase strictly; ``hs`` are the
    heights at those abscissae. Endpoint zeros are *not* enforced here so that
    inadmissible profiles can still be represented and reported on (see
    :func:`check_admissible_profile`).
    """

    xs: np.ndarray
    hs: np.ndarray

    def __post_init__(self):
        xs = np.array(self.xs, dtype=float)
        hs = np.array(self.hs, dtype=float)
        if xs.ndim != 1 or xs.shape != hs.shape or xs.size < 2:
            raise DomainError("profile needs matching 1-d breakpoint arrays of length >= 2")
        if xs[0] != 0.0 or xs[-1] != 1.0:
            raise DomainError("profile breakpoints must span exactly [0, 1]")
        if np.any(np.diff(xs) <= 0):
            raise DomainError("profile abscissae must be strictly increasing")
        if not np.all(np.isfinite(hs)):
            raise DomainError("profile heights must be finite")
        xs.setflags(write=False)
        hs.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "hs", hs)

    @classmethod
    def from_points(cls, points: Iterable[Sequence[float]]) -> "Profile":
        pts = np.asarray(list(points), dtype=float)
        return cls(pts[:, 0], pts[:, 1])

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.hs) / np.diff(self.xs)

    @property
    def lipschitz(self) -> float:
        return float(np.max(np.abs(self.slopes)))

    @property
    def max_height(self) -> float:
        return float(np.max(self.hs))

    def __call__(self, x):
        return np.interp(x, self.xs, self.hs)

    def integral(self, a: float = 0.0, b: float = 1.0) -> float:
        """Exact ``int_a^b h``."""
        a, b = max(a, 0.0), min(b, 1.0)
        if b <= a:
            return 0.0
        xs, hs = self._restricted(a, b)
        return float(np.sum(0.5 * (hs[1:] + hs[:-1]) * np.diff(xs)))

    def min_on(self, a: float, b: float) -> float:
        """Exact minimum of ``h`` over ``[a, b]``."""
        xs, hs = self._restricted(a, b)
        return float(hs.min())

    def support(self) -> list[tuple[float, float]]:
        """Closures of the connected components of ``{h > 0}``.

        Components are separated at breakpoints where ``h`` vanishes.
        """
        out = []
        start = None
        xs, hs = self.xs, self.hs
        for i in range(len(xs) - 1):
            if max(hs[i], hs[i + 1]) <= 0:
                continue
            if start is None:
                start = xs[i]
            if hs[i + 1] <= 0 or i + 1 == len(xs) - 1:
                out.append((float(start), float(xs[i + 1])))
                start = None
        return out

    def refined(self, extra: Iterable[float]) -> "Profile":
        """Same function with additional (collinear) breakpoints inserted."""
        xs = np.union1d(self.xs, np.clip(np.asarray(list(extra), dtype=float), 0, 1))
        return Profile(xs, self(xs))

    def _restricted(self, a, b):
        inner = (self.xs > a) & (self.xs < b)
        xs = np.concatenate(([a], self.xs[inner], [b]))
        return xs, self(xs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "h"])
        for x, h in zip(self.xs, self.hs):
            w.writerow([repr(float(x)), repr(float(h))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Profile":
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        if [c.strip() for c in rows[0]] != ["x", "h"]:
            raise DomainError("profile CSV must start with header 'x,h'")
        return cls.from_points([(float(x), float(h)) for x, h in rows[1:]])


@dataclass(frozen=True)
class BoxFamily:
    """Disjoint squares ``(x_i, x_i + l_i) x (0, l_i)`` ordered left to right."""

    boxes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        boxes = tuple((float(x), float(l)) for x, l in self.boxes)
        for x, l in boxes:
            if l <= 0:
                raise DomainError(f"box side must be positive, got {l}")
        for (x1, l1), (x2, _) in zip(boxes, boxes[1:]):
            if x1 + l1 > x2 * (1 + 1e-14) + 1e-300:
                raise DomainError("boxes must be ordered with x_i + l_i <= x_j")
        object.__setattr__(self, "boxes", boxes)

    def __len__(self):
        return len(self.boxes)

    def __iter__(self):
        return iter(self.boxes)

    def contained_in(self, profile: Profile, rtol: float = 1e-12) -> bool:
        for x, l in self.boxes:
            if x < 0 or x + l > 1:
                return False
            if profile.min_on(x, x + l) < l * (1 - rtol):
                return False
        return True

    @property
    def total_length(self) -> float:
        return sum(l for _, l in self.boxes)

    def volume_under(self, profile: Profile) -> float:
        return sum(profile.integral(x, x + l) for x, l in self.boxes)


def trapezoid_geometry(L: float, d: float, r0: float) -> tuple[float, float]:
    """Ramp width ``delta = min(r0, L)/16`` and plateau height ``d/(L - delta)``."""
    delta = min(r0, L) / 16.0
    return delta, d / (L - delta)


def build_trapezoid_profile(L: float, params: ModelParams, *, core_room: bool = False) -> Profile:
    """Island of length ``L`` and volume ``params.d`` with steep ramps of width
    ``min(r0, L)/16``.

    With ``core_room=True`` the additional bound ``L <= d/(4 r0)`` is enforced;
    it guarantees that the plateau is at least ``4 r0`` high so that
    dislocation cores of radius ``r0`` fit at height ``r0``.
    """
    if not (L > 0):
        raise DomainError(f"L must be positive, got {L!r}")
    if L > 1 * (1 + 1e-15):
        raise DomainError(f"L must satisfy L <= 1, got {L!r}")
    L = min(L, 1.0)
    if core_room and L > params.d / (4 * params.r0) * (1 + 1e-12):
        raise DomainError(
            f"L must satisfy L <= d/(4 r0) = {params.d / (4 * params.r0):.6g}, got {L!r}"
        )
    delta, hbar = trapezoid_geometry(L, params.d, params.r0)
    xs = [0.0, delta, L - delta, L]
    hs = [0.0, hbar, hbar, 0.0]
    if L < 1.0:
        xs.append(1.0)
        hs.append(0.0)
    return Profile(xs, hs)


def surface_energy(profile: Profile, gamma: float) -> float:
    """``gamma * int_0^1 sqrt(1 + h'^2)``, summed exactly over segments."""
    dx = np.diff(profile.xs)
    dh = np.diff(profile.hs)
    return float(gamma * math.fsum(np.hypot(dx, dh)))


@dataclass
class AdmissibilityReport:
    endpoints_zero: bool
    nonnegative: bool
    volume_ok: bool
    volume: float
    target: float

    @property
    def ok(self) -> bool:
        return self.endpoints_zero and self.nonnegative and self.volume_ok

    def failures(self) -> list[str]:
        names = ("endpoints_zero", "nonnegative", "volume_ok")
        return [n for n in names if not getattr(self, n)]


def check_admissible_profile(profile: Profile, d: float, tol: float = 1e-10) -> AdmissibilityReport:
    vol = profile.integral()
    return AdmissibilityReport(
        endpoints_zero=bool(profile.hs[0] == 0 and profile.hs[-1] == 0),
        nonnegative=bool(np.all(profile.hs >= 0)),
        volume_ok=abs(vol - d) <= tol * max(d, np.finfo(float).tiny),
        volume=vol,
        target=d,
    )


@dataclass
class BoundCheck:
    lhs: float
    rhs: float
    holds: bool


def isoperimetric_bound(profile: Profile, boxes: BoxFamily, gamma: float = 1.0,
                        tol: float = 1e-12) -> BoundCheck:
    """Graph length versus ``2 d_J / L_J`` for squares sitting under the graph.

    Both sides carry the factor ``gamma``.
    """
    if not boxes.contained_in(profile):
        raise DomainError("box family is not contained in the film domain")
    lhs = surface_energy(profile, gamma)
    if len(boxes) == 0:
        return BoundCheck(lhs, 0.0, True)
    rhs = gamma * 2.0 * boxes.volume_under(profile) / boxes.total_length
    return BoundCheck(lhs, rhs, lhs >= rhs - tol * max(1.0, abs(rhs)))


def largest_square(profile: Profile, x1: float, direction: int = 1) -> float:
    """Largest ``l`` with ``[x1, x1 + l) x (0, l)`` inside the film domain.

    ``direction=-1`` looks to the left, i.e. uses ``(x1 - l, x1)``. The
    result is capped by the distance to the end of ``[0, 1]``.
    """
    if direction == 1:
        xs, hs, pos = profile.xs, profile.hs, x1
    else:
        xs, hs, pos = (1.0 - profile.xs)[::-1], profile.hs[::-1], 1.0 - x1
    cap = 1.0 - pos
    m = float(np.interp(pos, xs, hs))
    if m <= 0 or cap <= 0:
        return 0.0
    # phi(l) = min_{[pos, pos+l]} h - l is strictly decreasing; walk the
    # segments until it changes sign
    la, ga = 0.0, m
    for xb in xs[xs > pos]:
        lb = min(xb - pos, cap)
        hb = float(np.interp(pos + lb, xs, hs))
        if min(m, hb) - lb >= 0:
            if lb >= cap:
                return cap
            m = min(m, hb)
            la, ga = lb, hb - lb
            continue
        candidates = []
        if la <= m <= lb:
            candidates.append(m)
        gb = hb - lb
        if gb < 0:
            candidates.append(la + ga * (lb - la) / (ga - gb))
        return float(min(candidates))
    return cap
