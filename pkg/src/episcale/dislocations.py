"""Dislocation measures, the equidistant core placement, the mollifier and
the core constant of the mollifier."""

from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .exceptions import DomainError, NumericalError
from .geometry import Profile
from .params import ModelParams


@dataclass(frozen=True)
class DislocationMeasure:
    """Finitely many cores, each carrying the Burgers vector ``(b, 0)``.

    Cores are kept sorted by ``x`` then ``y`` so that serialisation is
    deterministic.
    """

    b: float
    r0: float
    cores: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not (self.b > 0):
            raise DomainError(f"Burgers magnitude must be positive, got {self.b!r}")
        if not (0 < self.r0 <= 1):
            raise DomainError(f"r0 must lie in (0,1], got {self.r0!r}")
        cores = tuple(sorted((float(x), float(y)) for x, y in self.cores))
        for a, c in zip(cores, cores[1:]):
            if a == c:
                raise DomainError(f"duplicate core at {a}")
        object.__setattr__(self, "cores", cores)

    def __len__(self):
        return len(self.cores)

    @property
    def points(self) -> np.ndarray:
        return np.array(self.cores, dtype=float).reshape(-1, 2)

    def union(self, other: "DislocationMeasure") -> "DislocationMeasure":
        if other.b != self.b or other.r0 != self.r0:
            raise DomainError("can only join measures with equal b and r0")
        return DislocationMeasure(self.b, self.r0, self.cores + other.cores)

    def cores_inside(self, profile: Profile) -> list[bool]:
        """Whether each ball ``B_r0(p)`` lies in the film domain.

        Exact: the centre must be under the graph and at distance at least
        ``r0`` from every graph segment and from the substrate.
        """
        out = []
        r = self.r0
        for x, y in self.cores:
            if y - r < 0 or x - r < 0 or x + r > 1:
                out.append(False)
                continue
            # the distance from (x, y) to each graph segment must be >= r and
            # the centre must lie below the graph
            ok = y < profile(x)
            xs, hs = profile.xs, profile.hs
            for i in range(len(xs) - 1):
                ax, ay, bx, by = xs[i], hs[i], xs[i + 1], hs[i + 1]
                if bx < x - r or ax > x + r:
                    continue
                dx, dy = bx - ax, by - ay
                t = np.clip(((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy), 0, 1)
                if math.hypot(ax + t * dx - x, ay + t * dy - y) < r * (1 - 1e-12):
                    ok = False
                    break
            out.append(bool(ok))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# b={self.b!r},r0={self.r0!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in self.cores:
            w.writerow([repr(x), repr(y)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DislocationMeasure":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#"):
            raise DomainError("dislocation CSV must start with a '# b=...,r0=...' line")
        meta = dict(kv.split("=") for kv in lines[0][1:].strip().split(","))
        rows = list(csv.reader(lines[1:]))
        if [c.strip() for c in rows[0]] != ["x", "y"]:
            raise DomainError("dislocation CSV needs header 'x,y'")
        return cls(float(meta["b"]), float(meta["r0"]),
                   tuple((float(x), float(y)) for x, y in rows[1:] if x))


def dislocation_count(L: float, params: ModelParams) -> int:
    """``floor(L e0 / b)``, robust against ``L`` being an exact multiple of
    the spacing up to rounding."""
    q = L / params.period
    k = math.floor(q)
    if q - k > 1 - 1e-12:
        k += 1
    return max(k, 0)


def place_equidistant(L: float, params: ModelParams) -> DislocationMeasure:
    """Cores at ``(i b/e0, r0)`` for ``i = 1 .. k-1`` with ``k = floor(L e0/b)``."""
    params.require_construction_valid()
    if not (L > 0):
        raise DomainError(f"L must be positive, got {L!r}")
    k = dislocation_count(L, params)
    p = params.period
    return DislocationMeasure(params.b, params.r0,
                              tuple((i * p, params.r0) for i in range(1, k)))


def nucleation_energy(sigma: DislocationMeasure, c0: float = 1.0) -> float:
    return c0 * len(sigma) * sigma.b**2


# --- mollifier -------------------------------------------------------------

def _bump_primitive(u):
    """``F(u) = u e^{-1/u} - E1(1/u)``; ``F'(u) = e^{-1/u}``, ``F(0) = 0``."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    inv = 1.0 / u[pos]
    out[pos] = u[pos] * np.exp(-inv) - special.exp1(inv)
    return out


@functools.lru_cache(maxsize=None)
def bump_normalization() -> float:
    """Constant ``c`` with ``int c exp(-1/(1-|x|^2)) dx = 1`` over the unit disk.

    In polar coordinates the mass is ``pi c F(1)`` with ``F`` the primitive of
    ``exp(-1/u)``; the exponential integral gives ``F`` in closed form.
    """
    return float(1.0 / (math.pi * _bump_primitive(1.0)))


@dataclass(frozen=True)
class MollifierSpec:
    """Radial bump ``J1(x) = c exp(-1/(1-|x|^2))`` rescaled to radius ``r0``."""

    r0: float

    def __post_init__(self):
        if not (self.r0 > 0):
            raise DomainError(f"r0 must be positive, got {self.r0!r}")

    @property
    def normalization(self) -> float:
        return bump_normalization()

    def reference(self, s):
        """``J1`` as a function of the radius ``s = |x|``."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = s < 1
        out[inside] = self.normalization * np.exp(-1.0 / (1.0 - s[inside] ** 2))
        return out

    def reference_derivative(self, s):
        """Radial derivative ``dJ1/ds``."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = s < 1
        q = 1.0 - s[inside] ** 2
        out[inside] = -2.0 * s[inside] / q**2 * self.normalization * np.exp(-1.0 / q)
        return out

    def radial(self, r):
        """``J_r0`` as a function of the distance to the origin."""
        return self.reference(np.asarray(r, dtype=float) / self.r0) / self.r0**2

    def radial_derivative(self, r):
        return self.reference_derivative(np.asarray(r, dtype=float) / self.r0) / self.r0**3

    def mass_fraction(self, t):
        """``m(t) = int_{B_t} J1`` for the reference bump, ``t`` in units of
        the bump radius (so ``m(t) = 1`` for ``t >= 1``)."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        c = self.normalization
        return math.pi * c * (_bump_primitive(1.0) - _bump_primitive(1.0 - t**2))


def mollifier_value(spec: MollifierSpec, point) -> float:
    """``J_r0(x) = r0^-2 J1(x / r0)``."""
    x, y = point
    return float(spec.radial(math.hypot(x, y)))


@dataclass(frozen=True)
class CoreConstant:
    value: float
    error: float


def core_constant_integrand(spec: MollifierSpec, t):
    """``m(t)^2 / (2 pi t)``, extended by 0 at ``t = 0``."""
    t = np.asarray(t, dtype=float)
    m = spec.mass_fraction(t)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = m[pos] ** 2 / (2 * math.pi * t[pos])
    return out


def core_constant_CJ1(spec: MollifierSpec | None = None, tol: float = 1e-12) -> CoreConstant:
    """``int_0^1 m(t)^2 / (2 pi t) dt`` with ``m`` the radial mass of ``J1``."""
    if not (tol > 0):
        raise DomainError("tol must be positive")
    spec = spec or MollifierSpec(1.0)
    value, err = integrate.quad(lambda t: float(core_constant_integrand(spec, t)),
                                0.0, 1.0, epsabs=tol, epsrel=tol, limit=200)
    if not (err <= max(tol, tol * abs(value)) * 10):
        raise NumericalError("core constant quadrature did not converge", residual=err)
    return CoreConstant(float(value), float(err))
