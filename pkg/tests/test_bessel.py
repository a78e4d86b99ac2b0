"""Scaled modified Bessel values against scipy and mpmath."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from rsqmp.bessel import ive, ive_range, iv
from rsqmp.errors import NumericalUnderflow, ValidationError


@given(st.floats(0.01, 700.0), st.integers(0, 300))
def test_recurrence_matches_scipy(sigma, nmax):
    ours = ive_range(nmax, sigma)
    ref = special.ive(np.arange(nmax + 1), sigma)
    big = ref > 1e-290
    assert np.allclose(ours[big], ref[big], rtol=1e-11, atol=0)
    assert np.all(np.abs(ours[~big]) < 1e-280)


@pytest.mark.parametrize("sigma", [1e4 + 1, 1e5, 3.7e8, 9.4e12])
@pytest.mark.parametrize("ratio", [0.0, 0.01, 0.5, 1.0, 3.0])
def test_asymptotic_matches_mpmath(sigma, ratio):
    # orders up to 3 sqrt(sigma), where the reference series converges quickly
    n = int(ratio * math.sqrt(sigma))
    with mpmath.workdps(40):
        ref = float(mpmath.besseli(n, sigma) * mpmath.exp(-sigma))
    assert float(ive([n], sigma)[0]) == pytest.approx(ref, rel=1e-12)


def test_deep_tail_is_negligible():
    assert float(ive([3_000_000], 3.7e8)[0]) < 1e-300


@pytest.mark.parametrize("sigma", [0.5, 50.0, 700.0, 5e4, 1e9])
def test_normalization_identity(sigma):
    # e^{-s} (I_0 + 2 sum_{n >= 1} I_n) = 1
    nmax = int(12 * math.sqrt(sigma)) + 60
    v = ive_range(nmax, sigma)
    assert v[0] + 2 * v[1:].sum() == pytest.approx(1.0, abs=1e-12)


def test_zero_argument():
    v = ive_range(5, 0.0)
    assert v[0] == 1 and not v[1:].any()


def test_unscaled_refuses_overflow():
    assert float(iv([2], 10.0)[0]) == pytest.approx(special.iv(2, 10.0), rel=1e-12)
    with pytest.raises(NumericalUnderflow):
        iv([0], 701.0)


def test_invalid_arguments():
    with pytest.raises(ValidationError):
        ive_range(-1, 1.0)
    with pytest.raises(ValidationError):
        ive_range(3, -1.0)
    with pytest.raises(ValidationError):
        ive([-1], 1.0)
