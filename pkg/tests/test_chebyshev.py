"""Chebyshev model builders, evaluation and degree distributions."""

import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import chebyshev as npcheb
from scipy import special

from rsqmp.chebyshev import (
    Y_STAR,
    custom_model,
    degree_distribution,
    evaluate,
    evaluate_exact,
    exp_model,
    expected_degree,
    grid_sup_error,
    inverse_model,
    model_from_json,
    monomial_model,
    reweight_step,
    step_model,
    step_model_at,
    step_weights,
    step_z,
)
from rsqmp.errors import AllZeroCoefficients, NuTooLarge, ValidationError


def _coeffs_by_degree(model):
    return dict(zip(model.first_degrees.tolist(), model.first_coeffs.tolist()))


# ------------------------------------------------------------------ monomial


@pytest.mark.parametrize("t", [1, 2, 7, 20, 31])
def test_monomial_coefficients_match_poly2cheb(t):
    m = monomial_model(t, 1e-12)
    ref = npcheb.poly2cheb([0] * t + [1])
    got = _coeffs_by_degree(m)
    for j in range(m.k + 1):
        assert got.get(j, 0.0) == pytest.approx(ref[j], abs=1e-14)


@given(st.integers(1, 400), st.sampled_from([1e-1, 1e-2, 1e-4, 1e-8]))
def test_monomial_exact_coefficients(t, nu):
    m = monomial_model(t, nu)
    for j, c in _coeffs_by_degree(m).items():
        exact = Fraction(math.comb(t, (t - j) // 2), 2 ** (t - 1))
        if j == 0:
            exact /= 2
        assert c == float(exact)
        assert (t - j) % 2 == 0
    assert m.k == min(t, math.ceil(math.sqrt(2 * t * math.log(2 / nu))))


def test_monomial_rejects_bad_parameters():
    with pytest.raises(ValidationError):
        monomial_model(0, 0.1)
    with pytest.raises(ValidationError):
        monomial_model(3, 1.5)


# --------------------------------------------------------------- exponential


@pytest.mark.parametrize("beta,nu", [(1.0, 1e-3), (10.0, 1e-2), (100.0, 1e-2)])
def test_exp_coefficients_near_bessel_series(beta, nu):
    # e^{-beta x / 2} = I_0(beta/2) + 2 sum_j (-1)^j I_j(beta/2) T_j(x)
    m = exp_model(beta, nu)
    with mpmath.workdps(m.exact_dps):
        for j, c in zip(m.first_degrees, m.exact_first):
            ref = mpmath.besseli(int(j), mpmath.mpf(beta) / 2) * (1 if j == 0 else 2 * (-1) ** int(j))
            assert abs(c - ref) <= 2 * nu


def test_exp_exact_evaluation_at_large_beta():
    m = exp_model(100.0, 1e-2)
    xs = np.array([-1.0, -0.5, 0.0, 0.3, 1.0])
    vals = evaluate_exact(m, xs)
    with mpmath.workdps(m.exact_dps):
        for x, v in zip(xs, vals):
            assert abs(v - mpmath.exp(-50 * mpmath.mpf(float(x)))) <= m.nu
    # the one-norm is f~(-1) because the coefficients alternate in sign
    assert m.one_norm == pytest.approx(float(vals[0]), rel=1e-12)


def test_exp_rejects_large_nu():
    with pytest.raises(NuTooLarge):
        exp_model(1.0, math.exp(0.5))


# ------------------------------------------------------------------- inverse


@pytest.mark.parametrize("kappa,nu", [(2.0, 0.1), (3.0, 0.05), (4.0, 0.01)])
def test_inverse_coefficients_match_binomial_tail(kappa, nu):
    m = inverse_model(kappa, nu)
    b = m.meta["b"]
    assert b == math.ceil(kappa**2 * math.log(kappa / nu))
    for i, (d, c) in enumerate(zip(m.first_degrees, m.first_coeffs)):
        assert d == 2 * i + 1
        tail = Fraction(sum(math.comb(2 * b, r) for r in range(b + i + 1, 2 * b + 1)), 4**b)
        assert c == pytest.approx(float(4 * (-1) ** i * tail), rel=1e-12, abs=1e-300)


def test_inverse_domain_and_error():
    m = inverse_model(8.0, 1e-2)
    assert m.domain == ((-1.0, -0.125), (0.125, 1.0))
    with pytest.raises(ValidationError):
        evaluate(m, 1.5)
    with pytest.raises(ValidationError):
        inverse_model(1.0, 0.1)


# ---------------------------------------------------------------------- step


def _erf_step(x, y, sigma):
    return 0.5 + 0.5 * special.erf(math.sqrt(2 * sigma) * step_z(x, y))


@pytest.mark.parametrize("xi,nu,y", [(0.05, 1e-2, Y_STAR), (0.1, 1e-3, 0.2), (0.2, 1e-2, -0.6)])
def test_step_series_matches_erf_closed_form(xi, nu, y):
    m = step_model(xi, nu, y)
    x = np.linspace(-1, 1, 4001)
    err = np.max(np.abs(evaluate(m, x) - _erf_step(x, y, m.meta["sigma"])))
    # truncation tail of the erf series, with room for float roundoff
    assert err <= m.meta["tail"] + 1e-12
    assert m.meta["tail"] <= nu / 2


def test_step_weights_from_scipy():
    sigma, jmax = 37.0, 40
    j = np.arange(jmax + 1)
    ref = math.sqrt(2 * sigma / math.pi) * (special.ive(j, sigma) + special.ive(j + 1, sigma)) / (2 * j + 1)
    assert np.allclose(step_weights(sigma, jmax), ref, rtol=1e-12)


@given(st.floats(-0.95, 0.95))
def test_reweighting_reproduces_direct_coefficients(y):
    ref = step_model(0.1, 1e-2, Y_STAR, y_range=(-0.95, 0.95))
    moved = step_model_at(ref, y)
    theta = math.acos(y)
    w = step_weights(ref.meta["sigma"], ref.k)
    odd = 2 * np.arange(ref.k + 1) + 1
    assert np.allclose(moved.first_coeffs, -w * np.sin(odd * theta), atol=1e-15)
    assert np.allclose(moved.second_coeffs, w * np.cos(odd * theta), atol=1e-15)
    wT, wU = reweight_step(ref, y)
    assert np.max(np.abs(wT)) <= math.sqrt(2) + 1e-12
    assert np.max(np.abs(wU)) <= math.sqrt(2) + 1e-12


def test_reweighting_requires_reference_model():
    with pytest.raises(ValidationError):
        reweight_step(step_model(0.1, 1e-2, 0.3), 0.1)
    with pytest.raises(ValidationError):
        reweight_step(monomial_model(3, 0.1), 0.1)


def test_step_rejects_bad_parameters():
    with pytest.raises(ValidationError):
        step_model(0.0, 1e-2)
    with pytest.raises(ValidationError):
        step_model(0.1, 1e-2, y=1.5)


# ------------------------------------------------------------- grid contract


@given(
    st.sampled_from(["monomial", "exp", "inverse", "step"]),
    st.floats(0.0, 1.0),
    st.sampled_from([1e-1, 1e-2, 1e-3]),
)
def test_builders_meet_grid_contract(tag, u, nu):
    if tag == "monomial":
        m = monomial_model(1 + int(u * 150), nu)
    elif tag == "exp":
        m = exp_model(0.5 + u * 20, nu)
    elif tag == "inverse":
        m = inverse_model(1.5 + u * 6, nu)
    else:
        m = step_model(0.05 + u * 0.3, nu, -0.5 + u)
    assert grid_sup_error(m, 2000) <= nu


# ------------------------------------------------------------ evaluation


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=12), st.lists(st.floats(-3, 3), max_size=8))
def test_clenshaw_matches_numpy(first, second):
    m = custom_model(dict(enumerate(first)), dict(enumerate(second)), constant=0.25)
    x = np.linspace(-1, 1, 101)
    ref = 0.25 + npcheb.chebval(x, first)
    if second:
        # sqrt(1 - x^2) U_d(x) = sin((d + 1) arccos x)
        th = np.arccos(x)
        ref = ref + sum(c * np.sin((d + 1) * th) for d, c in enumerate(second))
    assert np.allclose(evaluate(m, x), ref, atol=1e-11)


def test_scalar_evaluation_returns_float():
    assert isinstance(evaluate(monomial_model(3, 0.1), 0.5), float)


# ---------------------------------------------------------- distributions


@given(st.dictionaries(st.integers(0, 30), st.floats(-2, 2).filter(lambda v: abs(v) > 1e-6), min_size=1))
def test_degree_distribution_is_normalized(coeffs):
    m = custom_model(coeffs)
    dist = degree_distribution(m)
    d, c, p = dist.parts["first"]
    assert p.sum() == pytest.approx(1.0)
    assert np.all(p >= 0)
    assert np.allclose(p, np.abs(c) / np.abs(c).sum())
    ref = sum(abs(v) * k for k, v in coeffs.items()) / sum(abs(v) for v in coeffs.values())
    assert expected_degree(m) == pytest.approx(ref)
    assert expected_degree(m, algorithm=2) == pytest.approx(2 * ref)


def test_second_kind_queries_count_one_extra():
    m = custom_model({}, {0: 1.0, 2: 1.0})
    assert expected_degree(m) == pytest.approx(2.0)


def test_all_zero_model_rejected():
    with pytest.raises(AllZeroCoefficients):
        degree_distribution(custom_model({0: 0.0, 3: 0.0}))


def test_model_json_round_trip():
    m = step_model(0.1, 1e-2)
    back = model_from_json(m.to_json())
    assert np.array_equal(back.first_coeffs, m.first_coeffs)
    assert np.array_equal(back.second_degrees, m.second_degrees)
    assert back.k == m.k and back.nu == m.nu
    x = np.linspace(-1, 1, 11)
    assert np.array_equal(evaluate(back, x), evaluate(m, x))
