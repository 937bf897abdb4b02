"""Inside the dislocation construction.

Run with ``python demos/dislocation_field.py``. Takes about two minutes.

The strain field of the dislocation construction is piecewise: uniform misfit
under the cores, a fan above each core and stress-free material on top. After
mollification its curl is the smeared dislocation measure. The script builds
a small island, prints the field along a horizontal line through a core,
checks the curl and the circulation, and breaks down the energy.
"""

import warnings

import numpy as np

from episcale import ModelParams, circulation, curl_residual
from episcale.scaling import construction_energy, dislocation_construction

params = ModelParams(gamma=1.0, e0=1.0, b=1 / 8, d=1.0, r0=1 / 320)
config = dislocation_construction(params, L=3.5 * params.period)
field, sigma = config.field, config.sigma
print(f"island length L = {config.L:.4f}, cores at {[round(x, 4) for x, _ in sigma.cores]}")

cx, cy = sigma.cores[0]
print("\nfirst row of H along y = 2 r0 near the first core:")
for x in np.linspace(cx - 3 * params.r0, cx + 3 * params.r0, 7):
    h11, h12 = field.first_row(x, 2 * params.r0)
    print(f"  x = {x:.5f}: H11 = {float(h11):+.5f}, H12 = {float(h12):+.5f}")

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    rng = np.random.default_rng(1)
    pts = [(cx + params.r0 * rng.uniform(-1, 1), cy + params.r0 * rng.uniform(-1, 1))
           for _ in range(20)]
    res = curl_residual(field, sigma, pts, params.r0 / 200)
    circ = circulation(field, (cx, cy), params.r0)
print(f"\ncurl residual / (b/r0^2) = {res / (params.b / params.r0**2):.2e}")
print(f"circulation around the core = {circ:.10f} (b = {params.b})")

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    e = construction_energy(config, params)
print(f"\nsurface {e.surface:.5f}  elastic {e.elastic:.5f} (+- {e.elastic_quadrature_error:.1e})  "
      f"nucleation {e.nucleation:.5f}  total {e.total:.5f}")
