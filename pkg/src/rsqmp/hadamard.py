"""Hadamard-test simulators for Chebyshev matrix elements.

Two routes are provided for every test: a spectral route that evaluates the
outcome law from eigen-decompositions, and an explicit circuit route built
from the qubitized oracle. The circuit route is the oracle for the spectral
one.

Register order in all circuit matrices is (control, oracle ancilla(s), system),
with the control as the most significant index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import optimize

from .errors import CannotSubnormalize, InvalidDensityMatrix, ValidationError
from .operators import (
    HermitianOperator,
    QubitizedOracle,
    build_qubitized_oracle,
    cheb2_matrix,
    cheb_matrix,
    chebyshev_t,
    chebyshev_u,
    new_hermitian,
    random_hermitian,
    sqrt_one_minus_sq,
)

Part = Literal["real", "imag"]
Kind = Literal["first", "second"]

DENSITY_TOL = 1e-10
EIG_GROUP_TOL = 1e-9


@dataclass(frozen=True)
class NoiseModel:
    """Oracle noise: none, global depolarizing after each query, or coherent.

    Attributes:
        kind: "none", "depolarizing" or "coherent".
        p: Depolarizing strength per oracle query, in [0, 1].
        eps_be: Coherent error: operator-norm distance between the faulty and
            the ideal oracle unitary.
    """

    kind: str = "none"
    p: float = 0.0
    eps_be: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "depolarizing", "coherent"):
            raise ValidationError(f"unknown noise kind {self.kind!r}")
        if not 0 <= self.p <= 1:
            raise ValidationError("p must lie in [0, 1]")
        if self.eps_be < 0:
            raise ValidationError("eps_be must be nonnegative")
        if self.kind != "depolarizing" and self.p != 0:
            raise ValidationError("p is only meaningful for depolarizing noise")
        if self.kind != "coherent" and self.eps_be != 0:
            raise ValidationError("eps_be is only meaningful for coherent noise")

    def damping(self, queries) -> np.ndarray | float:
        """Factor (1 - p)^queries multiplying every traceless expectation."""
        if self.kind != "depolarizing":
            return np.ones_like(np.asarray(queries, dtype=float)) if np.ndim(queries) else 1.0
        return (1.0 - self.p) ** np.asarray(queries, dtype=float)

    def to_json(self) -> dict:
        return {"kind": self.kind, "p": self.p, "eps_be": self.eps_be}


NO_NOISE = NoiseModel()


@dataclass(frozen=True)
class ShotOutcome:
    """One recorded Hadamard-test run.

    Attributes:
        b: Control outcome, +1 or -1.
        omega: Observable eigenvalue (paired tests only).
        j: First sampled degree.
        l: Second sampled degree (paired tests only).
        queries: Oracle queries used.
        mean: Exact conditional mean, set only for mean-exact samples, in
            which case b is +1 and omega is None.
    """

    b: int
    omega: float | None
    j: int
    l: int | None
    queries: int
    mean: float | None = None


@dataclass(frozen=True)
class Had2Law:
    """Joint law of (b, omega) for a paired test.

    Attributes:
        omegas: Distinct eigenvalues of the observable.
        probs: Array of shape (2, M); row 0 is b = +1, row 1 is b = -1.
    """

    omegas: np.ndarray
    probs: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.sum((self.probs[0] - self.probs[1]) * self.omegas))


# ------------------------------------------------------------------ helpers


def check_density(rho) -> np.ndarray:
    """Validates a density matrix (Hermitian, trace one, PSD within 1e-10)."""
    R = np.asarray(rho, dtype=np.complex128)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise InvalidDensityMatrix("density matrix must be square")
    if np.max(np.abs(R - R.conj().T)) > DENSITY_TOL:
        raise InvalidDensityMatrix("density matrix is not Hermitian")
    if abs(np.trace(R).real - 1) > DENSITY_TOL:
        raise InvalidDensityMatrix("density matrix trace is not 1")
    if np.linalg.eigvalsh((R + R.conj().T) / 2)[0] < -DENSITY_TOL:
        raise InvalidDensityMatrix("density matrix is not positive semidefinite")
    return (R + R.conj().T) / 2


def observable_projectors(O) -> tuple[np.ndarray, list[np.ndarray]]:
    """Groups the eigenvectors of O by distinct eigenvalue.

    Returns:
        (omegas, bases) where bases[m] has orthonormal columns spanning the
        eigenspace of omegas[m].
    """
    op = O if isinstance(O, HermitianOperator) else new_hermitian(O)
    w, V = op.eigenvalues, op.eigenvectors
    tol = EIG_GROUP_TOL * max(1.0, float(np.max(np.abs(w))))
    groups = [[0]]
    for i in range(1, w.size):
        if w[i] - w[groups[-1][0]] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    omegas = np.array([float(np.mean(w[g])) for g in groups])
    return omegas, [V[:, g] for g in groups]


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    if abs(np.linalg.norm(v) - 1) > 1e-10:
        raise ValidationError("state vector must have unit norm")
    return v


def prep_unitary(v) -> np.ndarray:
    """Unitary whose first column is v (Householder construction)."""
    v = _unit(v)
    D = v.size
    phase = v[0] / abs(v[0]) if abs(v[0]) > 0 else 1.0
    e0 = np.zeros(D, dtype=np.complex128)
    e0[0] = 1.0
    w = e0 - v / phase
    nw = np.linalg.norm(w)
    if nw < 1e-14:
        return phase * np.eye(D, dtype=np.complex128)
    w = w / nw
    return phase * (np.eye(D) - 2 * np.outer(w, w.conj()))


def depolarize(rho: np.ndarray, p: float) -> np.ndarray:
    """Global depolarizing channel of strength p on the whole register."""
    if p == 0:
        return rho
    d = rho.shape[0]
    return (1 - p) * rho + p * np.trace(rho) * np.eye(d) / d


# ------------------------------------------------------- single-element test


def had1_mean(A: HermitianOperator, j: int, phi, psi, part: Part = "real", kind: Kind = "first") -> float:
    """Mean of the Hadamard-test outcome, computed spectrally.

    Returns Re or Im of <phi|T_j(A)|psi> (first kind) or of
    <phi|sqrt(I - A^2) U_{j-1}(A)|psi> (second kind, j >= 1).
    """
    z = had1_amplitude(A, j, phi, psi, kind)
    return float(z.real if part == "real" else z.imag)


def had1_amplitude(A: HermitianOperator, j: int, phi, psi, kind: Kind = "first") -> complex:
    lam = np.clip(A.eigenvalues, -1, 1)
    if kind == "first":
        f = chebyshev_t(j, lam)
    elif kind == "second":
        if j < 1:
            raise ValidationError("second-kind test needs at least one query")
        f = sqrt_one_minus_sq(lam) * chebyshev_u(j - 1, lam)
    else:
        raise ValidationError(f"unknown kind {kind!r}")
    V = A.eigenvectors
    a = V.conj().T @ _unit(phi)
    b = V.conj().T @ _unit(psi)
    return complex(np.sum(a.conj() * f * b))


def had1_amplitudes(A: HermitianOperator, degrees, phi, psi, kind: Kind = "first") -> np.ndarray:
    """Vectorized had1_amplitude over many degrees (queries)."""
    lam = np.clip(A.eigenvalues, -1, 1)
    V = A.eigenvectors
    w = (V.conj().T @ _unit(phi)).conj() * (V.conj().T @ _unit(psi))
    degrees = np.asarray(degrees, dtype=np.int64)
    if degrees.size == 0:
        return np.zeros(0, dtype=complex)
    theta = np.arccos(lam)
    if kind == "first":
        # cos(j theta) is T_j(lambda) on [-1, 1]
        F = np.cos(np.outer(degrees, theta))
    else:
        if np.any(degrees < 1):
            raise ValidationError("second-kind test needs at least one query")
        F = np.sin(np.outer(degrees, theta))
    return F @ w


def had1_circuit_mean(
    oracle: QubitizedOracle,
    j: int,
    phi,
    psi,
    part: Part = "real",
    kind: Kind = "first",
    noise: NoiseModel = NO_NOISE,
) -> float:
    """Expectation of X on the control of the explicit single-element test.

    The control in |+> selects the preparation of phi (control 0) or psi
    (control 1), then controls U^j; the second-kind test flips the oracle
    ancilla on the control-1 branch. Depolarizing noise acts on the whole
    register after each controlled query.
    """
    D = oracle.dim // 2
    Vphi, Vpsi = prep_unitary(phi), prep_unitary(psi)
    I2, ID = np.eye(2), np.eye(D)
    P0, P1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    prep = np.kron(P0, np.kron(I2, Vphi)) + np.kron(P1, np.kron(I2, Vpsi))
    cu = np.kron(P0, np.eye(2 * D)) + np.kron(P1, oracle.unitary)
    start = np.zeros(4 * D, dtype=np.complex128)
    start[0] = 1 / math.sqrt(2)
    start[2 * D] = 1 / math.sqrt(2)
    state = prep @ start
    rho = np.outer(state, state.conj())
    p = noise.p if noise.kind == "depolarizing" else 0.0
    for _ in range(j):
        rho = depolarize(cu @ rho @ cu.conj().T, p)
    if kind == "second":
        X = np.array([[0.0, 1.0], [1.0, 0.0]])
        cx = np.kron(P0, np.eye(2 * D)) + np.kron(P1, np.kron(X, ID))
        rho = cx @ rho @ cx.conj().T
    if part == "imag":
        sdg = np.kron(np.diag([1.0, -1j]), np.eye(2 * D))
        rho = sdg @ rho @ sdg.conj().T
    Xc = np.kron(np.array([[0.0, 1.0], [1.0, 0.0]]), np.eye(2 * D))
    return float(np.trace(Xc @ rho).real)


def had1_sample(
    oracle: QubitizedOracle,
    j: int,
    phi,
    psi,
    part: Part,
    kind: Kind,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> ShotOutcome:
    """One run of the single-element test.

    A +-1 outcome is fixed in law by its mean, so sampling b with
    P(+1) = (1 + m)/2 is exact. Depolarizing noise damps m by (1-p)^j; a
    coherent error is already contained in ``oracle``.
    """
    m = had1_mean(oracle.source, j, phi, psi, part, kind) * noise.damping(j)
    b = 1 if rng.random() < (1 + m) / 2 else -1
    return ShotOutcome(b=b, omega=None, j=j, l=None, queries=j)


# ----------------------------------------------------------- paired test


def _first_second(A: HermitianOperator, j: int) -> tuple[np.ndarray, np.ndarray]:
    T = cheb_matrix(A, j)
    S = cheb2_matrix(A, j) if j >= 1 else np.zeros_like(T)
    return T, S


def had2_joint(
    oracle: QubitizedOracle,
    j: int,
    l: int,
    rho,
    O,
    noise: NoiseModel = NO_NOISE,
    backend: str = "spectral",
) -> Had2Law:
    """Joint law of the control outcome b and the observable outcome omega.

    The test uses two oracle-ancilla registers: U^j acts on (a1, s) when the
    control is 1 and U^l on (a2, s) when it is 0. Then
    E[b omega] = Re Tr[O T_j(A) rho T_l(A)].

    Args:
        oracle: Qubitized oracle (possibly perturbed).
        j: Queries on the control-1 branch.
        l: Queries on the control-0 branch.
        rho: System density matrix.
        O: Hermitian observable.
        noise: Depolarizing noise acts after every query on the full register.
        backend: "spectral" (closed form) or "circuit" (explicit 8D-dimensional
            density-matrix simulation).

    Raises:
        InvalidDensityMatrix: If rho is not a valid state.
    """
    R = check_density(rho)
    omegas, bases = observable_projectors(O)
    if backend == "circuit":
        return _had2_circuit(oracle, j, l, R, omegas, bases, noise)
    if backend != "spectral":
        raise ValidationError(f"unknown backend {backend!r}")
    A = oracle.source
    Tj, Sj = _first_second(A, j)
    Tl, Sl = _first_second(A, l)
    Kj = Tj @ R @ Tj + Sj @ R @ Sj
    Kl = Tl @ R @ Tl + Sl @ R @ Sl
    C = Tj @ R @ Tl
    probs = np.zeros((2, omegas.size))
    D = R.shape[0]
    q = float(noise.damping(j + l))
    for m, W in enumerate(bases):
        diag = 0.25 * (np.trace(W.conj().T @ Kj @ W).real + np.trace(W.conj().T @ Kl @ W).real)
        cross = 0.5 * np.trace(W.conj().T @ C @ W).real
        mixed = 0.5 * W.shape[1] / D
        probs[0, m] = q * (diag + cross) + (1 - q) * mixed
        probs[1, m] = q * (diag - cross) + (1 - q) * mixed
    return Had2Law(omegas=omegas, probs=np.clip(probs, 0.0, None))


def _embed(U: np.ndarray, D: int, which: int) -> np.ndarray:
    # U acts on (a, s); embed on (a1, a2, s) acting on a1 (which=1) or a2 (which=2)
    U4 = U.reshape(2, D, 2, D)
    I2 = np.eye(2)
    if which == 1:
        full = np.einsum("asbt,cd->acsbdt", U4, I2)
    else:
        full = np.einsum("asbt,cd->casdbt", U4, I2)
    return full.reshape(4 * D, 4 * D)


def _had2_circuit(oracle, j, l, R, omegas, bases, noise) -> Had2Law:
    D = oracle.dim // 2
    n = 4 * D
    P0, P1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    c_u = np.kron(P0, np.eye(n)) + np.kron(P1, _embed(oracle.unitary, D, 1))
    a_u = np.kron(P1, np.eye(n)) + np.kron(P0, _embed(oracle.unitary, D, 2))
    anc = np.zeros((4, 4))
    anc[0, 0] = 1.0
    plus = np.full((2, 2), 0.5)
    rho = np.kron(plus, np.kron(anc, R))
    p = noise.p if noise.kind == "depolarizing" else 0.0
    for _ in range(j):
        rho = depolarize(c_u @ rho @ c_u.conj().T, p)
    for _ in range(l):
        rho = depolarize(a_u @ rho @ a_u.conj().T, p)
    return _measure_x_and_o(rho, 4, D, omegas, bases)


def _measure_x_and_o(rho, n_anc, D, omegas, bases) -> Had2Law:
    probs = np.zeros((2, omegas.size))
    for bi, sign in enumerate((1.0, -1.0)):
        proj_c = 0.5 * np.array([[1.0, sign], [sign, 1.0]])
        for m, W in enumerate(bases):
            Pm = W @ W.conj().T
            full = np.kron(proj_c, np.kron(np.eye(n_anc), Pm))
            probs[bi, m] = np.trace(full @ rho).real
    return Had2Law(omegas=omegas, probs=np.clip(probs, 0.0, None))


def had2_single_register_joint(oracle: QubitizedOracle, j: int, l: int, rho, O) -> Had2Law:
    """The paired test with both branches sharing one oracle ancilla.

    Kept as a reference: its mean is Re Tr[O (T_j rho T_l + S_j rho S_l)]
    with S_j = sqrt(I - A^2) U_{j-1}(A), which is not the target quantity.
    """
    R = check_density(rho)
    omegas, bases = observable_projectors(O)
    D = oracle.dim // 2
    n = 2 * D
    P0, P1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    c_u = np.kron(P0, np.eye(n)) + np.kron(P1, oracle.unitary)
    a_u = np.kron(P1, np.eye(n)) + np.kron(P0, oracle.unitary)
    anc = np.diag([1.0, 0.0])
    rho_f = np.kron(np.full((2, 2), 0.5), np.kron(anc, R))
    M = np.linalg.matrix_power(a_u, l) @ np.linalg.matrix_power(c_u, j)
    rho_f = M @ rho_f @ M.conj().T
    return _measure_x_and_o(rho_f, 2, D, omegas, bases)


def had2_sample(
    oracle: QubitizedOracle,
    j: int,
    l: int,
    rho,
    O,
    noise: NoiseModel,
    rng: np.random.Generator,
    mode: str = "shot",
    backend: str = "spectral",
) -> ShotOutcome:
    """One run of the paired test.

    In "shot" mode (b, omega) is drawn from the joint law. In "mean" mode the
    sample is degenerate and carries the exact conditional mean E[b omega].
    """
    law = had2_joint(oracle, j, l, rho, O, noise, backend)
    if mode == "mean":
        return ShotOutcome(b=1, omega=None, j=j, l=l, queries=j + l, mean=law.mean)
    if mode != "shot":
        raise ValidationError(f"unknown mode {mode!r}")
    flat = law.probs.reshape(-1)
    idx = int(rng.choice(flat.size, p=flat / flat.sum()))
    bi, m = divmod(idx, law.omegas.size)
    return ShotOutcome(b=1 if bi == 0 else -1, omega=float(law.omegas[m]), j=j, l=l, queries=j + l)


# -------------------------------------------------------------- coherent noise


def _unitary_distance(A: HermitianOperator, A2: HermitianOperator) -> float:
    U1 = build_qubitized_oracle(A).unitary
    U2 = build_qubitized_oracle(A2).unitary
    return float(np.linalg.norm(U2 - U1, 2))


def perturb_oracle(
    A: HermitianOperator,
    eps_be: float,
    rng: np.random.Generator,
    rescale: bool = True,
    metric: str = "unitary",
) -> QubitizedOracle:
    """Oracle of A' = A + s E for a random Hermitian direction E.

    The scale s is solved so that the chosen distance equals ``eps_be``:
    "unitary" is ||U_{A'} - U_A|| (the distance the coherent-error bound is
    stated in), "block" is ||A' - A||. If ||A'|| exceeds one, A' is divided
    by its norm when ``rescale`` is set.

    Returns:
        Oracle for A' with ``info`` holding the achieved block and unitary
        distances and the scale.

    Raises:
        CannotSubnormalize: If rescaling is disabled and ||A'|| > 1.
    """
    if eps_be < 0:
        raise ValidationError("eps_be must be nonnegative")
    if eps_be == 0:
        return QubitizedOracle(
            unitary=build_qubitized_oracle(A).unitary,
            source=A,
            info={"block_distance": 0.0, "unitary_distance": 0.0, "scale": 0.0, "metric": metric},
        )
    E = random_hermitian(A.dim, rng, norm=1.0)

    def shifted(s: float) -> HermitianOperator:
        M = A.entries + s * E
        op = new_hermitian(M)
        if op.spectral_norm > 1:
            if not rescale:
                raise CannotSubnormalize(f"||A + E|| = {op.spectral_norm:.6g} exceeds 1")
            op = new_hermitian(M / op.spectral_norm)
        return op

    def dist(s: float) -> float:
        B = shifted(s)
        if metric == "unitary":
            return _unitary_distance(A, B)
        if metric == "block":
            return float(np.linalg.norm(B.entries - A.entries, 2))
        raise ValidationError(f"unknown metric {metric!r}")

    hi = eps_be
    for _ in range(60):
        if dist(hi) >= eps_be:
            break
        hi *= 2
    else:
        raise ValidationError("requested distance is not reachable")
    s = optimize.brentq(lambda v: dist(v) - eps_be, 0.0, hi, xtol=1e-15, rtol=1e-12)
    B = shifted(s)
    return QubitizedOracle(
        unitary=build_qubitized_oracle(B).unitary,
        source=B,
        info={
            "block_distance": float(np.linalg.norm(B.entries - A.entries, 2)),
            "unitary_distance": _unitary_distance(A, B),
            "scale": s,
            "metric": metric,
        },
    )
