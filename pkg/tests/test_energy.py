import math

import numpy as np
import pytest
from scipy import integrate

from episcale import (DislocationFree, DislocationMeasure, DomainError, ModelParams, Mollified,
                      MollifierSpec, PeriodicDislocation, Profile, QuadratureSpec, ZeroField,
                      build_trapezoid_profile, circulation, curl_residual, elastic_energy,
                      place_equidistant, total_energy)
from episcale.energy import (EnergyBreakdown, construction_elastic_energy, curl_of_first_row,
                             lame_density)
from episcale.scaling import dislocation_construction

CORE_PARAMS = ModelParams(gamma=1.0, e0=1.0, b=1 / 8, d=1.0, r0=1 / 320)


@pytest.fixture(scope="module")
def construction():
    p = CORE_PARAMS.period
    base = PeriodicDislocation(CORE_PARAMS, 4, 4.5 * p)
    field = Mollified(base, MollifierSpec(CORE_PARAMS.r0))
    sigma = DislocationMeasure(CORE_PARAMS.b, CORE_PARAMS.r0, tuple(base.cores(0.5 * p, 4 * p)))
    return field, sigma


def test_wedge_field_energy_on_unit_square():
    # |H_sym|^2 = e0^2 (1 - y)^2 + (e0 x)^2 / 2, integrated by hand
    e0 = 1.7
    square = Profile([0, 1], [1, 1])
    res = elastic_energy(DislocationFree(1.0, e0), square)
    assert res.value == pytest.approx(e0**2 / 3 + e0**2 / 6, abs=1e-8)
    assert res.error <= 1e-8


def test_wedge_field_energy_on_island_against_dblquad():
    params = ModelParams(gamma=1, e0=2.0, b=1, d=0.3, r0=1)
    L = 0.4
    prof = build_trapezoid_profile(L, params)
    field = DislocationFree(L, params.e0)
    res = elastic_energy(field, prof)

    def density(y, x):
        h11, h12 = field.first_row(x, y)
        return float(h11**2 + 0.5 * h12**2)

    oracle = 0.0
    for a, c in zip(prof.xs[:-1], prof.xs[1:]):
        val, _ = integrate.dblquad(density, a, c, 0, lambda x: min(float(prof(x)), L),
                                   epsabs=1e-13, epsrel=1e-12)
        oracle += val
    assert res.value == pytest.approx(oracle, rel=1e-9)


def test_zero_field_has_no_energy():
    prof = Profile([0, 0.5, 1], [0, 1, 0])
    assert elastic_energy(ZeroField(), prof).value == 0.0


def test_growth_bounds_bracket_value():
    res = elastic_energy(DislocationFree(1.0, 1.0), Profile([0, 1], [1, 1]), c1=0.5)
    assert res.lower == pytest.approx(0.5 * res.value)
    assert res.upper == pytest.approx(2 * res.value)


def test_lame_weight_on_generic_path():
    square = Profile([0, 1], [1, 1])
    mu, lam = 1.5, 0.7
    res = elastic_energy(DislocationFree(1.0, 1.0), square,
                         weight=lambda h11, h12: lame_density(h11, h12, mu, lam))
    # mu |sym|^2 + lam/2 tr^2 for the wedge field with e0 = 1
    assert res.value == pytest.approx(mu * 0.5 + lam / 6, abs=1e-8)


def test_unmollified_dislocation_energy_is_rejected():
    base = PeriodicDislocation(CORE_PARAMS, 4, 0.5)
    with pytest.raises(DomainError):
        elastic_energy(base, Profile([0, 1], [1, 1]))


def test_halving_base_cell_stays_within_error():
    prof = Profile([0, 0.3, 0.6, 1], [0, 0.8, 0.2, 0])
    field = DislocationFree(0.5, 1.3)
    coarse = elastic_energy(field, prof, quad=QuadratureSpec(base_cell=0.25))
    fine = elastic_energy(field, prof, quad=QuadratureSpec(base_cell=0.125))
    assert abs(fine.value - coarse.value) <= max(coarse.error, 1e-13 * coarse.value)


def test_breakdown_of_dislocation_free_island():
    params = ModelParams(gamma=1, e0=3, b=1, d=0.2, r0=1)
    prof = build_trapezoid_profile(0.5, params)
    br = total_energy(prof, DislocationFree(0.5, 3), DislocationMeasure(1, 1), params)
    assert br.nucleation == 0
    assert br.total == br.surface + br.elastic + br.nucleation


def test_inadmissible_configurations_name_the_clause():
    params = ModelParams(gamma=1, e0=1, b=1 / 8, d=1.0, r0=1 / 64)
    prof = build_trapezoid_profile(0.5, params)
    with pytest.raises(DomainError, match="volume_ok"):
        total_energy(prof, ZeroField(), DislocationMeasure(1 / 8, 1 / 64), params.replace(d=2.0))
    outside = DislocationMeasure(1 / 8, 1 / 64, ((0.7, 1 / 64),))
    with pytest.raises(DomainError, match="inside the film"):
        total_energy(prof, ZeroField(), outside, params)


def test_breakdown_csv():
    text = EnergyBreakdown(1.0, 2.0, 0.5, 3.5, 1e-9).to_csv()
    assert text.splitlines()[0] == "surface,elastic,nucleation,total,elastic_err"


@pytest.mark.slow
def test_circulation_around_core_is_burgers(construction):
    field, sigma = construction
    for core in sigma.cores[1:]:
        assert circulation(field, core, CORE_PARAMS.r0) == pytest.approx(CORE_PARAMS.b, rel=1e-6)


@pytest.mark.slow
def test_circulation_at_half_radius_is_partial_mass(construction):
    field, sigma = construction
    core = sigma.cores[1]
    m_half = float(MollifierSpec(1.0).mass_fraction(0.5))
    expected = CORE_PARAMS.b * m_half
    assert circulation(field, core, CORE_PARAMS.r0 / 2) == pytest.approx(expected, rel=1e-6)


def test_circulation_without_enclosed_mass(construction):
    field, _ = construction
    p = CORE_PARAMS.period
    assert abs(circulation(field, (2.5 * p, 0.3 * p), 0.1 * p)) <= 1e-8


@pytest.mark.slow
def test_circulation_counts_enclosed_cores(construction):
    field, sigma = construction
    p, r0 = CORE_PARAMS.period, CORE_PARAMS.r0
    # circle around the cores at 2p and 3p, at least r0 away from both
    val = circulation(field, (2.5 * p, r0), 0.5 * p + 3 * r0)
    assert val == pytest.approx(2 * CORE_PARAMS.b, rel=1e-6)


def test_circulation_rejects_defect_line_of_raw_field():
    base = PeriodicDislocation(CORE_PARAMS, 4, 0.5)
    p = CORE_PARAMS.period
    with pytest.raises(DomainError):
        circulation(base, (2 * p, 0.0), 0.3 * p)


def test_curl_identity_near_core(construction):
    field, sigma = construction
    r0, b = CORE_PARAMS.r0, CORE_PARAMS.b
    rng = np.random.default_rng(0)
    cx, cy = sigma.cores[1]
    pts = []
    for _ in range(20):
        phi = rng.uniform(0, 2 * math.pi)
        pts.append((cx + 0.5 * r0 * math.cos(phi), cy + 0.5 * r0 * math.sin(phi)))
    assert curl_residual(field, sigma, pts, r0 / 200) <= 1e-4 * b / r0**2


def test_curl_vanishes_far_from_cores(construction):
    field, sigma = construction
    p, r0 = CORE_PARAMS.period, CORE_PARAMS.r0
    pts = [(2.5 * p, 0.5 * p), (1.3 * p, 3 * p), (2.5 * p, -3 * r0)]
    assert curl_residual(field, sigma, pts, r0 / 100) <= 1e-8 * field.scale / r0


def test_wedge_field_is_curl_free():
    field = DislocationFree(0.5, 2.0)
    for x, y in [(0.1, 0.1), (0.7, 0.3), (0.4, 0.45)]:
        assert abs(curl_of_first_row(field, x, y, 1e-4)) <= 1e-8


def test_curl_step_must_be_small(construction):
    field, sigma = construction
    with pytest.raises(DomainError):
        curl_residual(field, sigma, [(0.3, 0.01)], CORE_PARAMS.r0)


@pytest.mark.slow
def test_construction_energy_box_size_within_error():
    params = ModelParams(gamma=1, e0=1, b=1 / 8, d=1.0, r0=1 / 320)
    L = 3.5 * params.period
    config = dislocation_construction(params, L=L)
    e8, err8 = construction_elastic_energy(config.field, config.profile, 8 * params.r0)
    e12, err12 = construction_elastic_energy(config.field, config.profile, 12 * params.r0)
    assert abs(e8 - e12) <= err8 + err12


def test_construction_within_upper_model():
    params = ModelParams(gamma=1, e0=1, b=1 / 8, d=1.0, r0=1 / 320)
    config = dislocation_construction(params, L=3.5 * params.period)
    assert len(config.sigma) == 2
    br = total_energy(config.profile, config.field, config.sigma, params)
    lg = 1 + params.c0 + params.log_ratio
    bound = params.gamma + params.d * params.gamma / config.L + config.L * params.e0 * params.b * lg
    assert br.total <= 3 * bound
    assert br.elastic_quadrature_error < br.elastic
    assert place_equidistant(config.L, params) == config.sigma
