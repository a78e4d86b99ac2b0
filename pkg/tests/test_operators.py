"""Hermitian validation, sub-normalization and the qubitized oracle."""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import chebyshev as npcheb

from rsqmp.errors import AlphaTooSmall, NonFinite, NotHermitian, NotSubnormalized, ValidationError
from rsqmp.operators import (
    build_qubitized_oracle,
    cheb2_apply,
    cheb2_matrix,
    cheb_apply,
    cheb_matrix,
    load_matrix,
    matrix_from_json,
    matrix_to_json,
    new_hermitian,
    oracle_power_block,
    random_hermitian,
    random_state,
    save_matrix,
    subnormalize,
)


def _eig_fn(A, fn):
    w, V = np.linalg.eigh(A)
    return (V * fn(w)[None, :]) @ V.conj().T


def _np_t(j, x):
    return npcheb.chebval(x, [0] * j + [1])


def _np_sqrt_u(j, x):
    # sqrt(1 - x^2) U_{j-1}(x) = sin(j arccos x)
    return np.sin(j * np.arccos(np.clip(x, -1, 1)))


def test_new_hermitian_sorts_and_symmetrizes(rng):
    H = random_hermitian(5, rng, 0.7)
    op = new_hermitian(H)
    assert np.all(np.diff(op.eigenvalues) >= 0)
    assert op.spectral_norm == pytest.approx(0.7)
    assert np.allclose(op.spectral_function(op.eigenvalues), H)


def test_new_hermitian_rejects_bad_input():
    with pytest.raises(NotHermitian):
        new_hermitian([[0, 1], [0, 0]])
    with pytest.raises(NonFinite):
        new_hermitian([[np.nan, 0], [0, 1]])
    with pytest.raises(ValidationError):
        new_hermitian([[1, 2, 3]])


def test_subnormalize_records_alpha(rng):
    H = random_hermitian(4, rng, 3.0)
    op = subnormalize(H, 4.0)
    assert op.alpha == 4.0
    assert op.spectral_norm == pytest.approx(0.75)
    with pytest.raises(AlphaTooSmall):
        subnormalize(H, 2.0)


def test_oracle_rejects_large_norm():
    with pytest.raises(NotSubnormalized):
        build_qubitized_oracle(new_hermitian(np.diag([1.5, 0.2])))


@given(st.integers(1, 4), st.integers(0, 10_000))
def test_oracle_is_unitary(logd, seed):
    D = 2**logd
    A = new_hermitian(random_hermitian(D, np.random.default_rng(seed), 1.0))
    U = build_qubitized_oracle(A).unitary
    assert np.allclose(U.conj().T @ U, np.eye(2 * D), atol=1e-10)
    assert np.allclose(U[:D, :D], A.entries)


@given(st.integers(0, 40), st.integers(0, 10_000))
def test_chebyshev_blocks_match_numpy_polynomials(j, seed):
    A = new_hermitian(random_hermitian(4, np.random.default_rng(seed), 0.95))
    T = _eig_fn(A.entries, lambda w: _np_t(j, w))
    S = _eig_fn(A.entries, lambda w: _np_sqrt_u(j, w))
    assert np.allclose(cheb_matrix(A, j), T, atol=1e-9)
    assert np.allclose(cheb2_matrix(A, j), S, atol=1e-9)
    oracle = build_qubitized_oracle(A)
    assert np.allclose(oracle_power_block(oracle, j, "first_kind"), T, atol=1e-9)
    assert np.allclose(oracle_power_block(oracle, j, "second_kind"), S, atol=1e-9)


@given(st.integers(0, 30), st.integers(0, 10_000))
def test_apply_matches_matrix(j, seed):
    r = np.random.default_rng(seed)
    A = new_hermitian(random_hermitian(6, r, 1.0))
    psi = random_state(6, r)
    assert np.allclose(cheb_apply(A, j, psi), cheb_matrix(A, j) @ psi, atol=1e-10)
    if j >= 1:
        assert np.allclose(cheb2_apply(A, j, psi), cheb2_matrix(A, j) @ psi, atol=1e-10)
    else:
        with pytest.raises(ValidationError):
            cheb2_apply(A, j, psi)


def test_negative_power_rejected(rng):
    oracle = build_qubitized_oracle(new_hermitian(random_hermitian(2, rng)))
    with pytest.raises(ValidationError):
        oracle_power_block(oracle, -1)


def test_matrix_json_round_trip(tmp_path, rng):
    M = random_hermitian(3, rng)
    obj = json.loads(json.dumps(matrix_to_json(M)))
    assert np.array_equal(matrix_from_json(obj), M)
    path = tmp_path / "m.json"
    save_matrix(path, M)
    assert np.array_equal(load_matrix(path), M)
    with pytest.raises(ValidationError):
        matrix_from_json({"dim": 2, "data": [[0, 0]]})
