import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from cqls import numerics
from cqls.errors import BracketError, QuadratureError


@pytest.mark.parametrize("x", [-8.0, -1.3, 0.0, 0.7, 5.0])
def test_normal_functions_match_scipy(x):
    assert numerics.normal_cdf(x) == pytest.approx(stats.norm.cdf(x), rel=1e-14)
    assert numerics.normal_sf(x) == pytest.approx(stats.norm.sf(x), rel=1e-14)
    assert numerics.normal_pdf(x) == pytest.approx(stats.norm.pdf(x), rel=1e-14)


def test_normal_ppf_round_trip():
    for q in (1e-10, 0.05, 0.5, 0.95, 1 - 1e-10):
        assert numerics.normal_cdf(numerics.normal_ppf(q)) == pytest.approx(q, rel=1e-9)


def test_chisq1_sf_small_and_large():
    assert numerics.chisq1_sf(3.841458820694124) == pytest.approx(0.05, rel=1e-12)
    # deep tail keeps relative accuracy
    assert numerics.chisq1_sf(200.0) == pytest.approx(stats.chi2.sf(200.0, 1), rel=1e-10)
    arr = numerics.chisq1_sf_array(np.array([0.0, 1.0, 50.0]))
    np.testing.assert_allclose(arr, stats.chi2.sf([0.0, 1.0, 50.0], 1), rtol=1e-12)


def test_quadrature_against_scipy_quad():
    f = lambda x: np.exp(-x * x) * np.cos(3 * x)  # noqa: E731
    ref, _ = integrate.quad(f, -2.0, 4.0, epsabs=1e-14)
    assert numerics.quadrature(f, -2.0, 4.0, tol=1e-12) == pytest.approx(ref, abs=1e-11)


def test_quadrature_bivariate_tail_against_scipy_mvn():
    rho, t = 0.4, 1.5
    s = math.sqrt(1 - rho * rho)
    f = lambda y: stats.norm.pdf(y) * stats.norm.sf((t - rho * y) / s)  # noqa: E731
    val = numerics.quadrature(f, t, 12.0, tol=1e-13)
    ref = stats.multivariate_normal([0, 0], [[1, rho], [rho, 1]]).cdf([-t, -t])
    assert val == pytest.approx(ref, abs=1e-7)


def test_quadrature_rejects_bad_interval():
    with pytest.raises(QuadratureError):
        numerics.quadrature(np.sin, 1.0, 1.0)
    with pytest.raises(QuadratureError):
        numerics.quadrature(np.sin, 0.0, 1.0, tol=0)


def test_find_root_and_bracket_error():
    r = numerics.find_root(lambda x: x**3 - 2, 0.0, 2.0, tol=1e-14)
    assert r == pytest.approx(2 ** (1 / 3), abs=1e-13)
    with pytest.raises(BracketError):
        numerics.find_root(lambda x: x * x + 1, -1.0, 1.0)


def test_random_stream_reproducible_and_independent():
    a = numerics.RandomStream(11, 3).generator().random(5)
    b = numerics.RandomStream(11, 3).generator().random(5)
    c = numerics.RandomStream(11, 4).generator().random(5)
    d = numerics.RandomStream(11, 3).child(0).generator().random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert not np.allclose(a, d)
    assert numerics.RandomStream(11).at(3) == numerics.RandomStream(11, 3)


@settings(max_examples=50, deadline=None)
@given(st.floats(-30, 30))
def test_cdf_plus_sf_is_one(x):
    assert numerics.normal_cdf(x) + numerics.normal_sf(x) == pytest.approx(1.0, abs=1e-15)
