"""Command-line entry point.

Usage::

    episcale COMMAND --config PATH [--out DIR] [--seed N] [--tol X] [--threads N]

Commands: ``energy``, ``construct``, ``sweep``, ``phase``, ``balls``,
``verify``. The configuration is a ``key = value`` document; see
:data:`KEYS` for the accepted keys and their defaults.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import balls as ballmod
from .dislocations import DislocationMeasure, MollifierSpec
from .energy import circulation, curl_residual
from .exceptions import ConfigError, DomainError, NumericalError
from .fields import (DislocationFree, Mollified, PeriodicDislocation,
                     calibrate_pointwise_constant, field_samples_csv, verify_pointwise_bound)
from .lowerbound import annulus_circulation_bound, strip_lower_bound_check
from .params import ModelParams
from .quadrature import QuadratureSpec
from .scaling import (SweepGrid, THREADS_ENV, construction_energy, dislocation_construction,
                      dislocation_free_construction, fit_exponent, log_axis, phase_csv,
                      phase_map, sweep, sweep_csv)

COMMANDS = ("energy", "construct", "sweep", "phase", "balls", "verify")

PARAM_KEYS = ("gamma", "e0", "b", "d", "r0", "c0", "c1")

#: Accepted configuration keys with their defaults (``None``: no default).
KEYS: dict = {
    "command": None,
    "gamma": None, "e0": None, "b": None, "d": None, "r0": None,
    "c0": 1.0, "c1": 1.0,
    # r0 = b / (e0 * r0_ratio) when given instead of r0
    "r0_ratio": None,
    "construction": "best",  # best | dislocation | dislocation_free
    "L": None,
    # sweep axis: values 10**(first + i/per_decade) for i < decades*per_decade
    "sweep_var": "d", "sweep_first_decade": None, "sweep_decades": 3.0, "sweep_per_decade": 10,
    # second axis for phase maps
    "phase_var": "e0", "phase_first_decade": None, "phase_decades": 2.0, "phase_per_decade": 5,
    # keep b/e0 fixed while e0 varies
    "fixed_period": False,
    "fit_model": "power",  # power | log_corrected
    "fit_construction": "",
    # field sampling for construct
    "sample_nx": 0, "sample_ny": 0,
    # ball construction: "x,y,r; x,y,r; ..." and/or a number of random families
    "balls": "", "random_families": 0, "t_final": 1.0, "sample_times": "0,0.5,1",
    # verify
    "verify_samples": 50,
    # quadrature
    "quad_base_cell": 0.25, "quad_max_depth": 12, "quad_order": 8,
    "quad_atol": 1e-8, "quad_rtol": 1e-10, "conv_order": 24,
}

_INT_KEYS = {"sweep_per_decade", "phase_per_decade", "sample_nx", "sample_ny",
             "random_families", "verify_samples", "quad_max_depth", "quad_order", "conv_order"}
_STR_KEYS = {"command", "construction", "sweep_var", "phase_var", "fit_model",
             "fit_construction", "balls", "sample_times"}
_BOOL_KEYS = {"fixed_period"}


@dataclass
class RunConfig:
    command: str | None
    values: dict
    given: set = field(default_factory=set)
    out: Path = Path(".")
    seed: int = 0
    threads: int = 1

    def get(self, key):
        return self.values[key]

    def params(self) -> ModelParams:
        missing = [k for k in ("gamma", "e0", "b", "d") if self.values[k] is None]
        if self.values["r0"] is None and self.values["r0_ratio"] is None:
            missing.append("r0")
        if missing:
            raise ConfigError(f"missing required key(s): {', '.join(missing)}")
        v = dict(self.values)
        if v["r0"] is None:
            v["r0"] = v["b"] / (v["e0"] * v["r0_ratio"])
        return ModelParams(**{k: v[k] for k in PARAM_KEYS})

    def quad(self) -> QuadratureSpec:
        v = self.values
        return QuadratureSpec(v["quad_base_cell"], v["quad_max_depth"], v["quad_order"],
                              v["quad_atol"], v["quad_rtol"])

    def header(self) -> str:
        items = [f"{k}={self.values[k]!r}" for k in sorted(self.values) if self.values[k] not in (None, "")]
        return f"# episcale {self.command} seed={self.seed} " + " ".join(items) + "\n"


def _convert(key: str, raw: str, line: int):
    if key in _STR_KEYS:
        return raw
    if key in _BOOL_KEYS:
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ConfigError(f"{key} must be true or false, got {raw!r}", line)
    try:
        return int(raw) if key in _INT_KEYS else float(raw)
    except ValueError:
        raise ConfigError(f"{key} expects a number, got {raw!r}", line) from None


def parse_config(text: str) -> RunConfig:
    """Strict ``key = value`` parsing; ``#`` starts a comment."""
    values = dict(KEYS)
    given = set()
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", n)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", n)
        if key in given:
            raise ConfigError(f"duplicate key {key!r}", n)
        if not val:
            raise ConfigError(f"empty value for {key!r}", n)
        values[key] = _convert(key, val, n)
        given.add(key)
    cfg = RunConfig(values.get("command"), values, given)
    if cfg.command is not None and cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    r0 = values["r0"]
    if r0 is not None and not (0 < r0 <= 1):
        raise DomainError(f"r0 must lie in (0,1], got {r0!r}")
    if all(
            values[k] is not None for k in ("gamma", "e0", "b", "d")) and (
            values["r0"] is not None or values["r0_ratio"] is not None):
        cfg.params()  # domain errors surface at parse time
    return cfg


# --- commands ----------------------------------------------------------------------

def _write(cfg: RunConfig, name: str, text: str) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / name
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _configs(cfg: RunConfig, params: ModelParams):
    which = cfg.get("construction")
    L = cfg.get("L")
    conv = cfg.get("conv_order")
    out = []
    if which in ("best", "dislocation"):
        out.append(dislocation_construction(params, L, order=conv))
    if which in ("best", "dislocation_free"):
        out.append(dislocation_free_construction(params, L))
    if not out:
        raise ConfigError(f"unknown construction {which!r}")
    return out


def cmd_energy(cfg: RunConfig) -> int:
    """One ``surface,elastic,nucleation,total,elastic_err`` file per
    construction, named ``energy_<construction>.csv``."""
    params = cfg.params()
    quad = cfg.quad()
    for c in _configs(cfg, params):
        e = construction_energy(c, params, quad)
        header = cfg.header() + f"# construction={c.name} L={c.L!r}\n"
        _write(cfg, f"energy_{c.name}.csv", e.to_csv(header))
    return 0


def cmd_construct(cfg: RunConfig) -> int:
    params = cfg.params()
    nx, ny = cfg.get("sample_nx"), cfg.get("sample_ny")
    for c in _configs(cfg, params):
        _write(cfg, f"{c.name}_profile.csv", cfg.header() + c.profile.to_csv())
        _write(cfg, f"{c.name}_dislocations.csv", cfg.header() + c.sigma.to_csv())
        if nx > 0 and ny > 0:
            xs = np.linspace(0.0, c.L, nx)
            ys = np.linspace(0.0, float(c.profile.max_height), ny)
            _write(cfg, f"{c.name}_field.csv", field_samples_csv(c.field, xs, ys, cfg.header()))
    return 0


def _axis(cfg: RunConfig, prefix: str, params: ModelParams) -> tuple[str, list]:
    var = cfg.get(f"{prefix}_var")
    if var not in ("gamma", "e0", "b", "d", "r0"):
        raise ConfigError(f"{prefix}_var must name a model parameter, got {var!r}")
    first = cfg.get(f"{prefix}_first_decade")
    if first is None:
        first = math.log10(getattr(params, var))
    vals = log_axis(first, cfg.get(f"{prefix}_decades"), cfg.get(f"{prefix}_per_decade"))
    if var == "e0" and cfg.get("fixed_period"):
        return "e0+b", [(v, v * params.period) for v in vals]
    return var, vals


def _grid(cfg: RunConfig, axes: Sequence[str]) -> SweepGrid:
    params = cfg.params()
    base = {k: getattr(params, k) for k in PARAM_KEYS}
    grid_axes = dict(_axis(cfg, a, params) for a in axes)
    ratio = cfg.get("r0_ratio") if cfg.get("r0") is None else None
    return SweepGrid.product(base, grid_axes, r0_ratio=ratio)


def _constructions(cfg: RunConfig) -> tuple[str, ...]:
    which = cfg.get("construction")
    if which == "best":
        return ("dislocation", "dislocation_free")
    if which in ("dislocation", "dislocation_free"):
        return (which,)
    raise ConfigError(f"unknown construction {which!r}")


def cmd_sweep(cfg: RunConfig) -> int:
    grid = _grid(cfg, ["sweep"])
    rows = sweep(grid, cfg.quad(), threads=cfg.threads, constructions=_constructions(cfg))
    _write(cfg, "sweep.csv", sweep_csv(rows, cfg.header()))
    status = 2 if any(r.flagged for r in rows) else 0
    buf = io.StringIO()
    buf.write(cfg.header())
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "model", "slope", "r2", "n"])
    try:
        fit = fit_exponent(rows, cfg.get("sweep_var"), "min_term", cfg.get("fit_model"),
                           cfg.get("fit_construction") or None)
        w.writerow([cfg.get("sweep_var"), "min_term", cfg.get("fit_model"), repr(fit.slope),
                    repr(fit.r2), fit.n])
    except (DomainError, NumericalError) as exc:
        w.writerow([cfg.get("sweep_var"), "min_term", cfg.get("fit_model"), "nan", "nan", 0])
        print(f"exponent fit failed: {exc}", file=sys.stderr)
        status = 2
    _write(cfg, "fit.csv", buf.getvalue())
    for r in rows:
        if r.flagged:
            print(f"row {r.point}: {r.error}", file=sys.stderr)
    return status


def cmd_phase(cfg: RunConfig) -> int:
    grid = _grid(cfg, ["sweep", "phase"])
    cells = phase_map(grid, cfg.quad(), threads=cfg.threads)
    _write(cfg, "phase.csv", phase_csv(cells, cfg.header()))
    return 2 if any(c.error for c in cells) else 0


def _parse_balls(text: str) -> list:
    out = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        parts = [float(v) for v in item.split(",")]
        if len(parts) != 3:
            raise ConfigError(f"ball {item!r} must be 'x,y,r'")
        out.append(((parts[0], parts[1]), parts[2]))
    return out


def cmd_balls(cfg: RunConfig) -> int:
    times = [float(t) for t in cfg.get("sample_times").split(",") if t.strip()]
    t_final = cfg.get("t_final")
    if times and max(times) > t_final:
        raise ConfigError("sample_times must not exceed t_final")
    families = []
    given = _parse_balls(cfg.get("balls"))
    if given:
        families.append(given)
    rng = np.random.default_rng(cfg.seed)
    families.extend(ballmod.random_family(rng) for _ in range(cfg.get("random_families")))
    if not families:
        raise ConfigError("balls needs 'balls' or 'random_families'")
    report = io.StringIO()
    report.write(cfg.header())
    w = csv.writer(report, lineterminator="\n")
    w.writerow(["family", "balls", "merges", "violations"])
    bad = 0
    for i, fam in enumerate(families):
        trace = ballmod.evolve(ballmod.merge_to_disjoint(fam), t_final)
        rep = ballmod.verify_properties(fam, trace, times)
        merges = sum(e.kind != "ball" for e in trace.events)
        w.writerow([i, len(fam), merges, len(rep.violations)])
        bad += len(rep.violations)
        if i == 0:
            _write(cfg, "balls.csv", trace.events_csv(cfg.header()))
    _write(cfg, "balls_report.csv", report.getvalue())
    return 2 if bad else 0


def cmd_verify(cfg: RunConfig) -> int:
    """Curl residuals, circulation, pointwise bound, annulus and strip checks
    on the dislocation construction of the configured parameters."""
    params = cfg.params()
    params.require_construction_valid()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.get("verify_samples")
    p, r0, b, e0 = params.period, params.r0, params.b, params.e0
    k = 4
    base = PeriodicDislocation(params, k, k * p + 0.5 * p)
    field = Mollified(base, MollifierSpec(r0), order=cfg.get("conv_order"))
    sigma = DislocationMeasure(b, r0, tuple(base.cores(-p, k * p)))
    rows = []

    # curl identity in the periodic part, away from the spurious left core
    pts = np.column_stack([rng.uniform(p, 3 * p, n), rng.uniform(0.0, min(3 * r0, 4 * p), n)])
    res = curl_residual(field, sigma, [tuple(q) for q in pts], r0 / 200)
    rows.append(("curl_residual", res, 1e-4 * b / r0**2))
    circ = circulation(field, (2 * p, r0), r0)
    rows.append(("circulation_rel_error", abs(circ - b) / b, 1e-6))

    # pointwise majorant: calibrate on half the samples, validate on the rest
    pts = np.column_stack([rng.uniform(p, 3 * p, 2 * n), rng.uniform(0.0, 4 * p, 2 * n)])
    C = calibrate_pointwise_constant(field, pts[:n])
    worst = max((verify_pointwise_bound(q, field, C).ratio for q in pts[n:]), default=0.0)
    rows.append(("pointwise_ratio", worst, 1.0))

    # annulus circulation bound around a core
    if p >= 17 * r0:
        ann = annulus_circulation_bound(field, (2 * p, r0), 2 * r0, 16 * r0, sigma)
        rows.append(("annulus_margin", ann.rhs - ann.lhs, 0.0))
    # strip estimate for the dislocation-free strain
    L = 0.5
    strip = strip_lower_bound_check(DislocationFree(L, e0), 0.1, L, 0.1 + L / 16, e0)
    rows.append(("strip_margin", strip.rhs - strip.lhs, 0.0))

    buf = io.StringIO()
    buf.write(cfg.header())
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "value", "threshold", "passed"])
    ok = True
    for name, val, thr in rows:
        passed = val <= thr
        ok &= passed
        w.writerow([name, repr(float(val)), repr(float(thr)), "true" if passed else "false"])
    _write(cfg, "verify.csv", buf.getvalue())
    return 0 if ok else 2


HANDLERS = {"energy": cmd_energy, "construct": cmd_construct, "sweep": cmd_sweep,
            "phase": cmd_phase, "balls": cmd_balls, "verify": cmd_verify}


def run(config: RunConfig) -> int:
    if config.command not in HANDLERS:
        raise ConfigError(f"unknown command {config.command!r}")
    return HANDLERS[config.command](config)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="episcale", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="key = value configuration file")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=None, help="absolute quadrature tolerance")
    ap.add_argument("--threads", type=int, default=None,
                    help=f"worker threads (default ${THREADS_ENV} or 1)")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        text = Path(args.config).read_text()
        cfg = parse_config(text)
        if cfg.command is not None and cfg.command != args.command:
            raise ConfigError(f"config is for {cfg.command!r}, not {args.command!r}")
        cfg.command = args.command
        cfg.out = Path(args.out)
        cfg.seed = args.seed
        if args.tol is not None:
            if not args.tol > 0:
                raise ConfigError("--tol must be positive")
            cfg.values["quad_atol"] = args.tol
        threads = args.threads
        if threads is None:
            try:
                threads = int(os.environ.get(THREADS_ENV, "1"))
            except ValueError:
                raise ConfigError(f"{THREADS_ENV} must be an integer") from None
        cfg.threads = max(1, threads)
        return run(cfg)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
