import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from episcale import DomainError, NumericalError, Profile, QuadratureSpec
from episcale.quadrature import (adaptive_integrate, base_cells, clip_halfplane, cut_pieces,
                                 film_pieces, integrate_polygon, polygon_area, quadrisect,
                                 rectangle, triangle_rule)


def test_triangle_rule_integrates_monomials_exactly():
    xi, eta, w = triangle_rule(6)
    # int_T x^a y^b over the reference triangle = a! b! / (a + b + 2)!
    for a in range(5):
        for b in range(5 - a):
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            assert np.sum(w * xi**a * eta**b) == pytest.approx(exact, rel=1e-13)


def test_clip_and_area():
    sq = rectangle(0, 1, 0, 1)
    half = clip_halfplane(sq, 1.0, 1.0, 1.0)  # x + y <= 1
    assert polygon_area(half) == pytest.approx(0.5)
    assert sum(polygon_area(q) for q in quadrisect(sq)) == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(c=st.floats(-0.5, 1.5), a=st.floats(-1, 1), b=st.floats(-1, 1))
def test_cut_pieces_preserve_area(a, b, c):
    if abs(a) + abs(b) < 1e-3:
        return
    pieces = cut_pieces([rectangle(0, 1, 0, 2)], [(a, b, c), (1.0, 0.0, 0.3)])
    assert sum(polygon_area(p) for p in pieces) == pytest.approx(2.0, rel=1e-12)


def test_film_pieces_cover_area_under_profile():
    prof = Profile([0, 0.2, 0.7, 1], [0, 1.5, 0.5, 0])
    pieces = film_pieces(prof, 0, 1)
    assert sum(polygon_area(p) for p in pieces) == pytest.approx(prof.integral(), rel=1e-14)
    capped = film_pieces(prof, 0, 1, 0.0, 0.6)
    cells = base_cells(capped, 0.1)
    assert sum(polygon_area(p) for p in cells) == pytest.approx(
        sum(polygon_area(p) for p in capped), rel=1e-13)


def test_polygon_rule_on_polynomial():
    poly = rectangle(0, 2, 0, 1)
    val = integrate_polygon(lambda x, y: x**3 * y**2, poly, 4)
    assert val == pytest.approx(16 / 4 / 3, rel=1e-13)


def test_adaptive_refines_kink():
    def f(x, y):
        return np.abs(x - 1 / 3) * np.ones_like(y)

    res = adaptive_integrate(f, [rectangle(0, 1, 0, 1)], QuadratureSpec(max_depth=8), atol=1e-7)
    exact = (1 / 3) ** 2 / 2 + (2 / 3) ** 2 / 2
    assert abs(res.value - exact) <= res.error
    assert res.error <= 1e-7
    # only cells cut by the kink are refined: two per level and column
    assert res.cells < 2 ** 10


def test_adaptive_reports_failure():
    def f(x, y):
        return 1.0 / np.sqrt(np.hypot(x - 0.123, y - 0.456))

    with pytest.raises(NumericalError, match="worst cells"):
        adaptive_integrate(f, [rectangle(0, 1, 0, 1)], QuadratureSpec(max_depth=1), atol=1e-12)


@pytest.mark.parametrize("kw", [dict(base_cell=0), dict(max_depth=-1), dict(atol=0)])
def test_spec_validation(kw):
    with pytest.raises(DomainError):
        QuadratureSpec(**kw)
