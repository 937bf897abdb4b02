"""The scaling function, the two upper-bound constructions, parameter sweeps
and exponent fits."""

from __future__ import annotations

import csv
import enum
import io
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from .dislocations import (DislocationMeasure, MollifierSpec, dislocation_count,
                           place_equidistant)
from .energy import EnergyBreakdown, total_energy
from .exceptions import DomainError, NumericalError
from .fields import DislocationFree, Mollified, PeriodicDislocation, StrainField
from .geometry import Profile, build_trapezoid_profile
from .params import ModelParams
from .quadrature import QuadratureSpec

#: Environment variable holding the default number of sweep threads.
THREADS_ENV = "EPISCALE_THREADS"


class Branch(str, enum.Enum):
    ELASTIC = "elastic"
    DISLOCATION = "dislocation"


@dataclass(frozen=True)
class ScalingValue:
    value: float
    branch: Branch
    elastic_term: float
    dislocation_term: float

    @property
    def min_term(self) -> float:
        return min(self.elastic_term, self.dislocation_term)


def scaling_branches(params: ModelParams) -> tuple[float, float]:
    """``(gamma e0 d)^{2/3}`` and ``[gamma e0 b d (1 + log(b/(e0 r0)))]^{1/2}``."""
    g, e0, b, d = params.gamma, params.e0, params.b, params.d
    elastic = (g * e0 * d) ** (2.0 / 3.0)
    disloc = math.sqrt(g * e0 * b * d * (1.0 + params.log_ratio))
    return elastic, disloc


def scaling_function_s(params: ModelParams) -> ScalingValue:
    """``s = gamma (1 + d) + min(elastic term, dislocation term)``.

    Ties go to the elastic branch.
    """
    params.require_theorem_valid()
    elastic, disloc = scaling_branches(params)
    branch = Branch.ELASTIC if elastic <= disloc else Branch.DISLOCATION
    value = params.gamma * (1.0 + params.d) + min(elastic, disloc)
    return ScalingValue(value, branch, elastic, disloc)


def optimal_L_dislocation(params: ModelParams) -> float:
    """Island length balancing ``d gamma / L`` against the dislocation cost
    ``L e0 b (1 + c0 + log(b/(e0 r0)))``, capped by 1 and ``d/(4 r0)``."""
    params.require_construction_valid()
    g, e0, b, d = params.gamma, params.e0, params.b, params.d
    if d == 0:
        raise DomainError("the dislocation construction needs d > 0")
    unconstrained = math.sqrt(g * d / (e0 * b * (1.0 + params.c0 + params.log_ratio)))
    return min(unconstrained, 1.0, d / (4.0 * params.r0))


def optimal_L_elastic(params: ModelParams) -> float:
    """1 if ``e0^2 <= d gamma``, else ``(d gamma)^{1/3} e0^{-2/3}``."""
    g, e0, d = params.gamma, params.e0, params.d
    if e0**2 <= d * g:
        return 1.0
    return (d * g) ** (1.0 / 3.0) * e0 ** (-2.0 / 3.0)


def dislocation_upper_model(L: float, params: ModelParams) -> float:
    """``gamma + d gamma / L + L e0 b (1 + c0 + log(b/(e0 r0)))``, the
    constant-free upper bound of the dislocation construction."""
    return (params.gamma + params.d * params.gamma / L
            + L * params.e0 * params.b * (1.0 + params.c0 + params.log_ratio))


def elastic_upper_model(L: float, params: ModelParams) -> float:
    """``gamma + d gamma / L + e0^2 L^2`` for the dislocation-free island."""
    return params.gamma + params.d * params.gamma / L + params.e0**2 * L**2


# --- constructions -------------------------------------------------------------

@dataclass(frozen=True)
class Configuration:
    """Profile, dislocations and strain of one construction."""

    name: str
    L: float
    profile: Profile
    sigma: DislocationMeasure
    field: StrainField


def dislocation_construction(params: ModelParams, L: float | None = None,
                             order: int = 24) -> Configuration:
    """Trapezoid of length ``L`` with ``floor(L e0/b) - 1`` equidistant cores
    at height ``r0`` and the mollified periodic strain."""
    params.require_construction_valid()
    L = optimal_L_dislocation(params) if L is None else L
    profile = build_trapezoid_profile(L, params, core_room=True)
    sigma = place_equidistant(L, params)
    base = PeriodicDislocation(params, dislocation_count(L, params), L)
    field = Mollified(base, MollifierSpec(params.r0), order=order)
    return Configuration("dislocation", L, profile, sigma, field)


def dislocation_free_construction(params: ModelParams, L: float | None = None) -> Configuration:
    """Trapezoid of length ``L`` with the wedge strain that relaxes the misfit
    linearly up to height ``L``."""
    L = optimal_L_elastic(params) if L is None else L
    profile = build_trapezoid_profile(L, params)
    return Configuration("dislocation_free", L, profile,
                         DislocationMeasure(params.b, params.r0, ()), DislocationFree(L, params.e0))


def construction_energy(config: Configuration, params: ModelParams,
                        quad: QuadratureSpec | None = None) -> EnergyBreakdown:
    return total_energy(config.profile, config.field, config.sigma, params, quad)


@dataclass(frozen=True)
class ScalingReport:
    s_value: float
    active_branch: Branch
    L_chosen: float
    winner: str
    energies: dict
    lengths: dict
    ratio: float

    @property
    def best(self) -> EnergyBreakdown:
        return self.energies[self.winner]


def best_construction(params: ModelParams, quad: QuadratureSpec | None = None) -> ScalingReport:
    """Evaluate both constructions and keep the cheaper one."""
    s = scaling_function_s(params)
    configs = [dislocation_construction(params), dislocation_free_construction(params)]
    energies = {c.name: construction_energy(c, params, quad) for c in configs}
    lengths = {c.name: c.L for c in configs}
    # ties go to the construction without dislocations
    winner = min(("dislocation_free", "dislocation"), key=lambda n: energies[n].total)
    total = energies[winner].total
    return ScalingReport(s.value, s.branch, lengths[winner], winner, energies, lengths,
                         total / s.value)


# --- sweeps ----------------------------------------------------------------------

def log_axis(first_decade: float, decades: float, per_decade: int) -> list[float]:
    """``decades * per_decade`` log-spaced values starting at ``10**first_decade``
    (the right end point excluded)."""
    n = int(round(decades * per_decade))
    return [10.0 ** (first_decade + i / per_decade) for i in range(n)]


@dataclass(frozen=True)
class SweepGrid:
    """Cartesian product of parameter axes around ``base``.

    Axis keys name a parameter, or several joined by ``+`` whose values are
    then tuples varied together. With ``r0_ratio`` set, ``r0`` follows the
    other parameters as ``b / (e0 * r0_ratio)``.
    """

    base: dict
    axes: tuple = ()
    r0_ratio: float | None = None

    @classmethod
    def product(cls, base: dict, axes: dict, r0_ratio: float | None = None) -> "SweepGrid":
        return cls(dict(base), tuple((k, tuple(v)) for k, v in axes.items()), r0_ratio)

    def points(self) -> list[dict]:
        keys = [k.split("+") for k, _ in self.axes]
        out = []
        for combo in itertools.product(*(vals for _, vals in self.axes)):
            pt = dict(self.base)
            for names, val in zip(keys, combo):
                vals = val if len(names) > 1 else (val,)
                if len(vals) != len(names):
                    raise DomainError(f"axis {'+'.join(names)} needs {len(names)}-tuples")
                pt.update(zip(names, (float(v) for v in vals)))
            if self.r0_ratio is not None:
                pt["r0"] = pt["b"] / (pt["e0"] * self.r0_ratio)
            out.append(pt)
        return out

    def __len__(self):
        return len(self.points())


@dataclass(frozen=True)
class SweepRow:
    point: dict
    params: ModelParams | None
    L: float
    energy: EnergyBreakdown | None
    s_value: float
    ratio: float
    branch: str
    winner: str
    energies: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def flagged(self) -> bool:
        return self.error is not None

    @property
    def min_term(self) -> float:
        """Total energy minus ``gamma (1 + d)``."""
        return self.energy.total - self.point["gamma"] * (1.0 + self.point["d"])


SWEEP_HEADER = ["gamma", "e0", "b", "d", "r0", "c0", "L", "surface", "elastic", "nucleation",
                "total", "s", "ratio", "branch"]


def _sweep_point(pt: dict, quad: QuadratureSpec | None, constructions: Sequence[str]) -> SweepRow:
    try:
        params = ModelParams(**pt)
        if set(constructions) == {"dislocation", "dislocation_free"}:
            rep = best_construction(params, quad)
            return SweepRow(pt, params, rep.L_chosen, rep.best, rep.s_value, rep.ratio,
                            rep.active_branch.value, rep.winner, rep.energies)
        s = scaling_function_s(params)
        builders = {"dislocation": dislocation_construction,
                    "dislocation_free": dislocation_free_construction}
        energies, lengths = {}, {}
        for name in constructions:
            cfg = builders[name](params)
            energies[name] = construction_energy(cfg, params, quad)
            lengths[name] = cfg.L
        winner = min(constructions, key=lambda n: energies[n].total)
        return SweepRow(pt, params, lengths[winner], energies[winner], s.value,
                        energies[winner].total / s.value, s.branch.value, winner, energies)
    except (DomainError, NumericalError) as exc:
        return SweepRow(pt, None, math.nan, None, math.nan, math.nan, "error", "", {},
                        f"{type(exc).__name__}: {exc}")


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def sweep(grid: SweepGrid | Iterable[dict], quad: QuadratureSpec | None = None, *,
          threads: int | None = None,
          constructions: Sequence[str] = ("dislocation", "dislocation_free")) -> list[SweepRow]:
    """One row per grid point, in grid order. Invalid points are flagged and
    the sweep continues."""
    pts = grid.points() if isinstance(grid, SweepGrid) else list(grid)
    threads = default_threads() if threads is None else max(1, threads)
    if threads == 1 or len(pts) <= 1:
        return [_sweep_point(pt, quad, constructions) for pt in pts]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda pt: _sweep_point(pt, quad, constructions), pts))


def _fmt(v) -> str:
    return repr(float(v))


def sweep_csv(rows: Sequence[SweepRow], header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        pt = r.point
        lead = [pt.get(k, math.nan) for k in ("gamma", "e0", "b", "d", "r0")]
        lead.append(pt.get("c0", 1.0))
        if r.energy is None:
            tail = [math.nan] * 7
            w.writerow([_fmt(v) for v in lead + tail] + ["error"])
            continue
        e = r.energy
        w.writerow([_fmt(v) for v in lead + [r.L, e.surface, e.elastic, e.nucleation, e.total,
                                              r.s_value, r.ratio]] + [r.branch])
    return buf.getvalue()


# --- fits ------------------------------------------------------------------------

class FitModel(str, enum.Enum):
    POWER = "power"
    LOG_CORRECTED = "log_corrected"


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r2: float
    n: int


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> FitResult:
    """Least-squares line through ``(log x, log y)``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 8:
        raise DomainError(f"need at least 8 points to fit an exponent, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("exponent fits need positive values")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) < 1e-8:
        raise NumericalError("degenerate spread in the independent variable")
    res = np.polynomial.polynomial.Polynomial.fit(lx, ly, 1).convert()
    intercept, slope = res.coef
    pred = intercept + slope * lx
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(intercept), r2, int(x.size))


def row_value(row: SweepRow, name: str, construction: str | None = None) -> float:
    """Named quantity of a sweep row.

    ``min_term`` is the energy minus ``gamma (1 + d)``; ``s_min`` the same for
    the scaling function. Energies refer to the winning construction unless
    ``construction`` names another one.
    """
    pt = row.point
    if name in pt:
        return float(pt[name])
    e = row.energies[construction] if construction else row.energy
    surface_floor = pt["gamma"] * (1.0 + pt["d"])
    if name == "min_term":
        return e.total - surface_floor
    if name == "s_min":
        return row.s_value - surface_floor
    if name == "s":
        return row.s_value
    if name == "L":
        return row.L
    if name in ("surface", "elastic", "nucleation", "total"):
        return getattr(e, name)
    raise DomainError(f"unknown sweep quantity {name!r}")


def fit_exponent(rows: Sequence[SweepRow], x_var: str = "d", y_var: str = "min_term",
                 model: FitModel | str = FitModel.POWER,
                 construction: str | None = None) -> FitResult:
    """Slope of ``log y`` against ``log x``; with the log-corrected model ``y``
    is first divided by ``sqrt(1 + log(b/(e0 r0)))``."""
    model = FitModel(model)
    good = [r for r in rows if not r.flagged]
    x = [row_value(r, x_var, construction) for r in good]
    y = [row_value(r, y_var, construction) for r in good]
    if model is FitModel.LOG_CORRECTED:
        y = [v / math.sqrt(1.0 + math.log(r.point["b"] / (r.point["e0"] * r.point["r0"])))
             for v, r in zip(y, good)]
    return fit_power_law(x, y)


# --- regimes -------------------------------------------------------------------------

@dataclass(frozen=True)
class Favorability:
    favorable: bool
    lhs: float
    rhs: float


def flat_film_favorability(L: float, params: ModelParams) -> Favorability:
    """Dislocations pay off in a flat film of length ``L`` and height ``d/L``
    when ``min(L, d/L) >= (b/e0) log(b/(e0 r0))``."""
    if not (L > 0):
        raise DomainError(f"L must be positive, got {L!r}")
    lhs = min(L, params.d / L)
    rhs = params.period * params.log_ratio
    return Favorability(lhs >= rhs, lhs, rhs)


def flat_film_energies(L: float, params: ModelParams) -> tuple[float, float]:
    """Constant-free elastic energies of a flat film of length ``L`` without
    and with equidistant dislocations."""
    e0, b, d, r0 = params.e0, params.b, params.d, params.r0
    without = min(e0**2 * L**2, e0**2 * d)
    with_disl = L * e0 / b * min(b**2 * math.log(d / (L * r0)), b**2 * params.log_ratio)
    return without, with_disl


def crossover_d(params: ModelParams, d_lo: float, d_hi: float, rtol: float = 1e-10) -> float:
    """``d`` at which both branches of the scaling function coincide, by
    bisection on ``log d``."""
    def gap(logd):
        e, dl = scaling_branches(params.replace(d=math.exp(logd)))
        return math.log(e) - math.log(dl)
    a, b = math.log(d_lo), math.log(d_hi)
    if gap(a) * gap(b) > 0:
        raise DomainError("the branches do not cross inside the bracket")
    root = optimize.bisect(gap, a, b, xtol=rtol, rtol=rtol * 1e-2, maxiter=400)
    return math.exp(root)


@dataclass(frozen=True)
class PhaseCell:
    point: dict
    branch: str
    winner: str
    ratio: float
    error: str | None = None


PHASE_HEADER = ["d", "e0", "b", "r0", "branch", "winner", "ratio"]


def phase_map(grid: SweepGrid, quad: QuadratureSpec | None = None, *,
              threads: int | None = None) -> list[PhaseCell]:
    """Active branch of the scaling function and cheapest construction on a
    parameter grid."""
    rows = sweep(grid, quad, threads=threads)
    return [PhaseCell(r.point, r.branch, r.winner, r.ratio, r.error) for r in rows]


def phase_csv(cells: Sequence[PhaseCell], header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PHASE_HEADER)
    for c in cells:
        pt = c.point
        w.writerow([_fmt(pt.get(k, math.nan)) for k in ("d", "e0", "b", "r0")]
                   + [c.branch, c.winner or "error", _fmt(c.ratio)])
    return buf.getvalue()
