"""Which construction wins, and how the energy grows with the volume.

Run with ``python demos/scaling_law.py``. Takes about a minute.

The minimal energy above the flat-film baseline grows like d^(2/3) while a
dislocation-free island is best, and like (d log)^(1/2) once misfit
dislocations pay off. This script sweeps d on both sides, fits the
exponents, and prints where the two branches of the scaling function cross.
"""

import warnings

from episcale import ModelParams, scaling_function_s
from episcale.scaling import SweepGrid, crossover_d, fit_exponent, log_axis, sweep

RATIO = 64.0**4  # b/(e0 r0) at the validity threshold


def elastic_side():
    print("Dislocation-free islands (e0 = 10, b = 1):")
    grid = SweepGrid.product(dict(gamma=1, e0=10, b=1, c0=1), {"d": log_axis(-3, 3, 4)},
                             r0_ratio=RATIO)
    rows = sweep(grid, constructions=("dislocation_free",))
    for r in rows[::3]:
        print(f"  d={r.point['d']:.3g}  total={r.energy.total:.6g}  s={r.s_value:.6g}  "
              f"total/s={r.ratio:.4f}")
    fit = fit_exponent(rows, "d", "min_term")
    print(f"  fitted exponent {fit.slope:.3f} (r2 {fit.r2:.5f}); expected 2/3\n")


def dislocation_side():
    print("Islands with misfit dislocations (e0 = 1, b = 5e-5):")
    grid = SweepGrid.product(dict(gamma=1, e0=1, b=5e-5, c0=1),
                             {"d": [3e-9 * 10 ** (i / 3) for i in range(9)]}, r0_ratio=RATIO)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = sweep(grid, constructions=("dislocation",))
    for r in rows[::2]:
        print(f"  d={r.point['d']:.3g}  L={r.L:.4g}  total/s={r.ratio:.4f}")
    fit = fit_exponent(rows, "d", "min_term", "log_corrected", "dislocation")
    print(f"  log-corrected exponent {fit.slope:.3f} (r2 {fit.r2:.5f}); expected 1/2\n")


def crossover():
    base = ModelParams(gamma=1, e0=1, b=1e-2, d=1e-2, r0=1e-2 / RATIO)
    d_star = crossover_d(base, 1e-3, 1e-1)
    print(f"With e0 = 1, b = 0.01 the branches cross at d = {d_star:.4g}:")
    for d in (d_star / 10, d_star * 10):
        s = scaling_function_s(base.replace(d=d))
        print(f"  d={d:.3g}: {s.branch.value} branch, s={s.value:.6g}")


if __name__ == "__main__":
    elastic_side()
    dislocation_side()
    crossover()
