"""Dense Hermitian operators and their qubitized block encodings.

Every operator caches its eigendecomposition at construction, so all
Chebyshev actions below are evaluated either by the three-term recurrence or
directly in the eigenbasis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import AlphaTooSmall, NonFinite, NotHermitian, NotSubnormalized, ValidationError

HERMITIAN_TOL = 1e-12
UNIT_TOL = 1e-10
NORM_TOL = 1e-12

BlockKind = Literal["first_kind", "second_kind"]


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Validated Hermitian matrix with its spectral decomposition.

    Attributes:
        entries: D x D complex matrix.
        eigenvalues: Real eigenvalues in ascending order.
        eigenvectors: Unitary whose columns are the eigenvectors.
        alpha: Sub-normalization factor; ``entries`` equals the raw input
            divided by ``alpha``.
    """

    entries: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    alpha: float = 1.0

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def spectral_norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    def spectral_function(self, values: np.ndarray) -> np.ndarray:
        """Returns V diag(values) V^dagger for per-eigenvalue values."""
        V = self.eigenvectors
        return (V * np.asarray(values)[None, :]) @ V.conj().T


@dataclass(frozen=True, eq=False)
class QubitizedOracle:
    """Explicit 2D x 2D unitary [[A, -R], [R, A]] with R = sqrt(I - A^2).

    Attributes:
        unitary: The oracle matrix; the first D rows/columns carry ancilla |0>.
        source: Operator whose block encoding this is.
        info: Free-form construction metadata (e.g. perturbation distances).
    """

    unitary: np.ndarray
    source: HermitianOperator
    info: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.unitary.shape[0]


def _as_square(matrix) -> np.ndarray:
    M = np.array(matrix, dtype=np.complex128)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValidationError(f"expected a non-empty square matrix, got shape {M.shape}")
    return M


def new_hermitian(matrix) -> HermitianOperator:
    """Validates a Hermitian matrix and caches its eigendecomposition.

    Args:
        matrix: Square array-like, real or complex.

    Returns:
        HermitianOperator with ascending eigenvalues.

    Raises:
        NonFinite: If any entry is NaN or infinite.
        NotHermitian: If max |M - M^dagger| exceeds 1e-12.
    """
    M = _as_square(matrix)
    if not np.all(np.isfinite(M)):
        raise NonFinite("matrix has non-finite entries")
    dev = float(np.max(np.abs(M - M.conj().T)))
    if dev > HERMITIAN_TOL:
        raise NotHermitian(f"max |M - M^dagger| = {dev:.3e} exceeds {HERMITIAN_TOL:.0e}")
    M = (M + M.conj().T) / 2
    w, V = np.linalg.eigh(M)
    return HermitianOperator(entries=M, eigenvalues=w, eigenvectors=V)


def subnormalize(raw, alpha: float) -> HermitianOperator:
    """Divides a Hermitian matrix by ``alpha`` so that its norm is at most one.

    Args:
        raw: HermitianOperator or square array-like.
        alpha: Scale factor, at least the spectral norm of ``raw``.

    Returns:
        Operator ``raw / alpha`` with ``alpha`` recorded.

    Raises:
        AlphaTooSmall: If alpha is below the spectral norm of ``raw``.
    """
    op = raw if isinstance(raw, HermitianOperator) else new_hermitian(raw)
    alpha = float(alpha)
    norm = op.spectral_norm
    if not alpha > 0 or alpha < norm * (1 - NORM_TOL):
        raise AlphaTooSmall(f"alpha={alpha!r} below spectral norm {norm!r}")
    return HermitianOperator(
        entries=op.entries / alpha,
        eigenvalues=op.eigenvalues / alpha,
        eigenvectors=op.eigenvectors,
        alpha=op.alpha * alpha,
    )


def _check_unit(psi) -> np.ndarray:
    v = np.asarray(psi, dtype=np.complex128).reshape(-1)
    n = np.linalg.norm(v)
    if abs(n - 1.0) > UNIT_TOL:
        raise ValidationError(f"vector norm {n!r} is not 1 within {UNIT_TOL:.0e}")
    return v


def chebyshev_t(j: int, x) -> np.ndarray:
    """First-kind Chebyshev polynomial T_j at points x by recurrence."""
    x = np.asarray(x, dtype=float)
    if j == 0:
        return np.ones_like(x)
    prev, cur = np.ones_like(x), x.copy()
    for _ in range(j - 1):
        prev, cur = cur, 2 * x * cur - prev
    return cur


def chebyshev_u(j: int, x) -> np.ndarray:
    """Second-kind Chebyshev polynomial U_j at points x by recurrence.

    U_{-1} is taken as zero.
    """
    x = np.asarray(x, dtype=float)
    if j < 0:
        return np.zeros_like(x)
    prev, cur = np.zeros_like(x), np.ones_like(x)
    for _ in range(j):
        prev, cur = cur, 2 * x * cur - prev
    return cur


def sqrt_one_minus_sq(x) -> np.ndarray:
    """sqrt(1 - x^2) with x clamped to [-1, 1] first."""
    x = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
    return np.sqrt(1.0 - x * x)


def cheb_matrix(A: HermitianOperator, j: int) -> np.ndarray:
    """T_j(A) evaluated in the eigenbasis."""
    return A.spectral_function(chebyshev_t(j, np.clip(A.eigenvalues, -1, 1)))


def cheb2_matrix(A: HermitianOperator, j: int) -> np.ndarray:
    """sqrt(I - A^2) U_{j-1}(A) evaluated in the eigenbasis."""
    lam = np.clip(A.eigenvalues, -1, 1)
    return A.spectral_function(sqrt_one_minus_sq(lam) * chebyshev_u(j - 1, lam))


def cheb_apply(A: HermitianOperator, j: int, psi) -> np.ndarray:
    """Applies T_j(A) to a unit vector with the three-term recurrence.

    Args:
        A: Operator with spectral norm at most one.
        j: Nonnegative degree.
        psi: Unit vector of length D.

    Returns:
        The vector T_j(A) psi.
    """
    if j < 0:
        raise ValidationError("degree must be nonnegative")
    v = _check_unit(psi)
    if j == 0:
        return v.copy()
    M = A.entries
    prev, cur = v, M @ v
    for _ in range(j - 1):
        prev, cur = cur, 2 * (M @ cur) - prev
    return cur


def cheb2_apply(A: HermitianOperator, j: int, psi) -> np.ndarray:
    """Applies sqrt(I - A^2) U_{j-1}(A) to a unit vector in the eigenbasis.

    Args:
        A: Operator with spectral norm at most one.
        j: Positive degree (number of oracle queries).
        psi: Unit vector of length D.
    """
    if j < 1:
        raise ValidationError("second-kind degree must be positive")
    v = _check_unit(psi)
    lam = np.clip(A.eigenvalues, -1, 1)
    V = A.eigenvectors
    coeff = sqrt_one_minus_sq(lam) * chebyshev_u(j - 1, lam)
    return V @ (coeff * (V.conj().T @ v))


def build_qubitized_oracle(A: HermitianOperator) -> QubitizedOracle:
    """Builds the single-ancilla qubitized block encoding of ``A``.

    Raises:
        NotSubnormalized: If the spectral norm of A exceeds 1 + 1e-12.
    """
    if A.spectral_norm > 1 + NORM_TOL:
        raise NotSubnormalized(f"spectral norm {A.spectral_norm!r} exceeds 1")
    R = A.spectral_function(sqrt_one_minus_sq(A.eigenvalues))
    # the top-left block is A itself, not a reconstruction from the eigenbasis
    U = np.block([[A.entries, -R], [R, A.entries]])
    return QubitizedOracle(unitary=U, source=A)


def oracle_power_block(U: QubitizedOracle, j: int, block: BlockKind = "first_kind") -> np.ndarray:
    """Returns <0|U^j|0> or <1|U^j|0> by explicit matrix power."""
    if j < 0:
        raise ValidationError("power must be nonnegative")
    D = U.dim // 2
    P = np.linalg.matrix_power(U.unitary, j)
    if block == "first_kind":
        return P[:D, :D]
    if block == "second_kind":
        return P[D:, :D]
    raise ValidationError(f"unknown block {block!r}")


def matrix_to_json(matrix) -> dict:
    """Encodes a dense complex matrix as a header object with [re, im] pairs."""
    M = _as_square(matrix)
    return {
        "format": "dense-complex",
        "dim": int(M.shape[0]),
        "data": [[float(z.real), float(z.imag)] for z in M.reshape(-1)],
    }


def matrix_from_json(obj: dict) -> np.ndarray:
    """Decodes the format written by :func:`matrix_to_json`."""
    try:
        dim = int(obj["dim"])
        data = np.asarray(obj["data"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed matrix object: {exc}") from exc
    if dim < 1 or data.shape != (dim * dim, 2):
        raise ValidationError(f"matrix data shape {data.shape} does not match dim {dim}")
    return (data[:, 0] + 1j * data[:, 1]).reshape(dim, dim)


def save_matrix(path, matrix) -> None:
    Path(path).write_text(json.dumps(matrix_to_json(matrix)))


def load_matrix(path) -> np.ndarray:
    return matrix_from_json(json.loads(Path(path).read_text()))


def random_hermitian(dim: int, rng: np.random.Generator, norm: float | None = 1.0) -> np.ndarray:
    """Draws a GUE-style Hermitian matrix, optionally rescaled to a given norm."""
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    H = (X + X.conj().T) / 2
    if norm is not None:
        H = H * (norm / np.max(np.abs(np.linalg.eigvalsh(H))))
    return H


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR with phase correction."""
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    Q, R = np.linalg.qr(X)
    d = np.diag(R)
    return Q * (d / np.abs(d))[None, :]


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)
