import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from indeptest.errors import DomainError
from indeptest.numkit import (
    gamma_cdf,
    gamma_pdf,
    gamma_quantile,
    make_rng,
    median_pairwise_sqdist,
    normal_cdf,
    normal_quantile,
    stream_id,
)
from oracles import bisect, naive_matmul

mpmath.mp.dps = 40


def mp_normal_cdf(x):
    return float(mpmath.ncdf(mpmath.mpf(x)))


@pytest.mark.parametrize("x", [-37.5, -8.0, -3.3, -1.0, -1e-3, 0.0, 0.5, 1.959964, 2.7, 6.0, 9.0])
def test_normal_cdf_against_arbitrary_precision(x):
    ref = mp_normal_cdf(x)
    assert abs(normal_cdf(x) - ref) <= 1e-12


def test_normal_cdf_symmetry_and_known_values():
    assert normal_cdf(0.0) == 0.5
    for x in np.linspace(-6, 6, 41):
        assert normal_cdf(x) + normal_cdf(-x) == pytest.approx(1.0, abs=1e-15)
    assert abs(normal_cdf(1.959964) - 0.975) < 1e-6


def test_normal_quantile_inverts_cdf_on_grid():
    for p in np.linspace(0.005, 0.995, 100):
        assert abs(normal_cdf(normal_quantile(p)) - p) < 1e-9


def test_normal_quantile_bisection_oracle():
    q = bisect(lambda x: mp_normal_cdf(x), 0.975, -10.0, 10.0)
    assert abs(normal_quantile(0.975) - q) < 1e-9
    assert abs(normal_quantile(0.975) - 1.959964) < 1e-5
    assert normal_quantile(0.5) == 0.0
    assert normal_quantile(0.05) == pytest.approx(-normal_quantile(0.95), abs=1e-14)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_normal_quantile_domain(p):
    with pytest.raises(DomainError):
        normal_quantile(p)


def test_gamma_cdf_exponential_special_case():
    assert gamma_cdf(1.0, 1.0, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-15)


@pytest.mark.parametrize("shape,scale,x", [(0.3, 2.0, 0.1), (2.0, 3.0, 7.0), (5.5, 0.2, 1.1), (40.0, 1.0, 35.0)])
def test_gamma_cdf_against_mpmath(shape, scale, x):
    ref = float(mpmath.gammainc(shape, 0, x / scale, regularized=True))
    assert gamma_cdf(x, shape, scale) == pytest.approx(ref, rel=1e-12, abs=1e-15)


def test_gamma_scale_family():
    for x in (0.2, 1.0, 4.0):
        assert gamma_cdf(x, 2.5, 3.0) == pytest.approx(gamma_cdf(x / 3.0, 2.5, 1.0), abs=1e-15)


def test_gamma_quantile_bisection_oracle():
    v = gamma_quantile(0.95, 2.0, 3.0)
    assert abs(gamma_cdf(v, 2.0, 3.0) - 0.95) < 1e-8
    ref = bisect(lambda x: float(mpmath.gammainc(2, 0, x / 3.0, regularized=True)), 0.95, 0.0, 100.0)
    assert v == pytest.approx(ref, rel=1e-10)


def test_gamma_quantile_cdf_roundtrip_grid():
    for shape, scale in ((0.5, 1.0), (2.0, 3.0), (12.0, 0.01)):
        for p in np.linspace(0.01, 0.99, 100):
            assert abs(gamma_cdf(gamma_quantile(p, shape, scale), shape, scale) - p) < 1e-8


def test_gamma_pdf_is_derivative_of_cdf():
    for shape, scale, x in ((2.0, 3.0, 4.0), (0.7, 1.5, 0.9), (9.0, 0.5, 4.2)):
        h = 1e-6 * x
        num = (gamma_cdf(x + h, shape, scale) - gamma_cdf(x - h, shape, scale)) / (2 * h)
        assert gamma_pdf(x, shape, scale) == pytest.approx(num, rel=1e-6)


def test_gamma_cdf_monotone():
    xs = np.linspace(0, 30, 300)
    vals = gamma_cdf(xs, 3.0, 2.0)
    assert np.all(np.diff(vals) >= 0)


@pytest.mark.parametrize("shape,scale", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0)])
def test_gamma_domain(shape, scale):
    with pytest.raises(DomainError):
        gamma_cdf(1.0, shape, scale)
    with pytest.raises(DomainError):
        gamma_quantile(0.5, shape, scale)


def test_median_pairwise_exhaustive_oracle(rng):
    pts = rng.standard_normal((5, 3))
    d = sorted(float(np.sum((pts[i] - pts[j]) ** 2)) for i in range(5) for j in range(i + 1, 5))
    assert median_pairwise_sqdist(pts) == pytest.approx(d[4], rel=1e-14)


def test_median_pairwise_lower_median_even_count(rng):
    pts = rng.standard_normal((4, 2))  # 6 pairs -> index 2
    d = sorted(float(np.sum((pts[i] - pts[j]) ** 2)) for i in range(4) for j in range(i + 1, 4))
    assert median_pairwise_sqdist(pts) == pytest.approx(d[2], rel=1e-14)


def test_median_pairwise_trivial_cases():
    assert median_pairwise_sqdist([[0.0, 0.0], [3.0, 4.0]]) == 25.0
    assert median_pairwise_sqdist(np.ones((6, 2))) == 0.0
    with pytest.raises(DomainError):
        median_pairwise_sqdist([[1.0, 2.0]])


def test_rng_reproducible_and_streams_differ():
    a = make_rng(7, 3).standard_normal(10_000)
    b = make_rng(7, 3).standard_normal(10_000)
    c = make_rng(7, 4).standard_normal(10_000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    # distinct streams look independent: correlation within a few standard errors of 0
    assert abs(np.corrcoef(a, c)[0, 1]) < 4 / math.sqrt(10_000)


def test_stream_id_stable():
    assert stream_id("power", "hsic-d", 3) == stream_id("power", "hsic-d", 3)
    assert stream_id("a", 1) != stream_id("a", 2)


def test_matrix_multiply_against_triple_loop(rng):
    A = rng.standard_normal((8, 8))
    B = rng.standard_normal((8, 8))
    assert np.max(np.abs(A @ B - naive_matmul(A, B))) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=-30, max_value=30))
def test_normal_cdf_in_unit_interval_and_monotone(x):
    v = normal_cdf(x)
    assert 0.0 <= v <= 1.0
    assert normal_cdf(x + 0.1) >= v


@settings(max_examples=60, deadline=None)
@given(
    st.floats(min_value=1e-3, max_value=1 - 1e-3),
    st.floats(min_value=0.2, max_value=50.0),
    st.floats(min_value=0.05, max_value=20.0),
)
def test_gamma_quantile_roundtrip_property(p, shape, scale):
    assert abs(gamma_cdf(gamma_quantile(p, shape, scale), shape, scale) - p) < 1e-8
