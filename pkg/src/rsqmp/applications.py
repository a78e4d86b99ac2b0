"""End-to-end pipelines built on the randomized estimators.

Each pipeline ships with a brute-force classical oracle (enumeration,
eigensolve or direct solve) so results can be checked at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chebyshev import Y_STAR, exp_model, expected_degree, inverse_model, monomial_model, step_model
from .errors import (
    GapTooSmall,
    NotErgodic,
    OverlapTooSmall,
    OverlapViolated,
    SearchInconsistent,
    SpectrumInGap,
    ValidationError,
)
from .estimator import (
    estimate_amplitude,
    estimate_expectation,
    estimate_step_amplitude,
    nu_for_pair,
)
from .hadamard import NO_NOISE, NoiseModel
from .operators import HermitianOperator, new_hermitian, subnormalize

MAX_SPINS = 12
GAP_TOL = 1e-12
DEFAULT_MAX_T = 10**6
DEFAULT_Y_DRAWS = 16
BOOTSTRAP_FLOOR = 1e-4


@dataclass
class UseCaseResult:
    """Pipeline output.

    Attributes:
        value: The final estimate.
        report: Parameters, stage summaries and complexity comparisons.
    """

    value: complex | float
    report: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        v = self.value
        val = {"re": v.real, "im": v.imag} if isinstance(v, complex) else float(v)
        return {"value": val, "report": self.report}


def _sub_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(seed), *keys]).generate_state(1)[0])


def _stage_summary(rep) -> dict:
    est = rep.estimate
    return {
        "estimate": {"re": est.real, "im": est.imag} if isinstance(est, complex) else float(est),
        "epsilon": rep.epsilon,
        "delta": rep.delta,
        "shots_used": rep.shots_used,
        "total_queries": rep.total_queries,
        "avg_queries_per_run": rep.avg_queries_per_run,
    }


# -------------------------------------------------------------- Ising / MCMC


@dataclass(frozen=True, eq=False)
class IsingModel:
    """Classical Ising model E(s) = -1/2 s^T J s - h^T s with s_i = 1 - 2 bit_i.

    Bit i of a configuration index is spin i.
    """

    n_spins: int
    J: np.ndarray
    h: np.ndarray
    energies: np.ndarray

    def to_json(self) -> dict:
        return {"n": self.n_spins, "J": self.J.tolist(), "h": self.h.tolist()}


def new_ising(n: int, J, h=None) -> IsingModel:
    """Validates couplings and enumerates all 2^n energies."""
    if not 1 <= n <= MAX_SPINS:
        raise ValidationError(f"n must lie in [1, {MAX_SPINS}]")
    J = np.asarray(J, dtype=float)
    h = np.zeros(n) if h is None else np.asarray(h, dtype=float)
    if J.shape != (n, n) or h.shape != (n,):
        raise ValidationError("J must be n x n and h of length n")
    if not np.allclose(J, J.T, atol=0, rtol=0):
        raise ValidationError("J must be symmetric")
    if np.any(np.diag(J) != 0):
        raise ValidationError("J must have a zero diagonal")
    spins = 1 - 2 * ((np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1)
    energies = -0.5 * np.einsum("yi,ij,yj->y", spins, J, spins) - spins @ h
    return IsingModel(n_spins=n, J=J, h=h, energies=energies)


def ising_ring(n: int, coupling: float = 1.0, field_: float = 0.0) -> IsingModel:
    """Nearest-neighbour ring with uniform coupling and field."""
    J = np.zeros((n, n))
    for i in range(n):
        j = (i + 1) % n
        if i != j:
            J[i, j] = J[j, i] = coupling
    return new_ising(n, J, np.full(n, field_))


def partition_function(ising: IsingModel, beta: float) -> float:
    """Exact Z by enumeration."""
    e0 = float(np.min(ising.energies))
    return float(np.exp(-beta * e0) * np.sum(np.exp(-beta * (ising.energies - e0))))


@dataclass(frozen=True, eq=False)
class MarkovChainData:
    """Lazy Metropolis chain, its discriminant, gap and stationary amplitudes."""

    P: np.ndarray
    A: HermitianOperator
    gap: float
    sqrt_pi: np.ndarray


def metropolis_discriminant(ising: IsingModel, beta: float) -> MarkovChainData:
    """Single-spin-flip Metropolis chain at inverse temperature beta, made lazy.

    Raises:
        NotErgodic: If the spectral gap vanishes.
    """
    if beta < 0:
        raise ValidationError("beta must be nonnegative")
    n = ising.n_spins
    N = 2**n
    E = ising.energies
    P = np.zeros((N, N))
    idx = np.arange(N)
    for i in range(n):
        nb = idx ^ (1 << i)
        dE = E[nb] - E
        P[idx, nb] += np.minimum(1.0, np.exp(-beta * np.maximum(dE, 0.0))) / n
    P[idx, idx] = 1.0 - P.sum(axis=1)
    P = 0.5 * (P + np.eye(N))
    A = np.sqrt(P * P.T)
    op = new_hermitian(A)
    lam = op.eigenvalues
    gap = float(1.0 - np.max(np.abs(lam[:-1]))) if N > 1 else 1.0
    if gap < GAP_TOL:
        raise NotErgodic(f"spectral gap {gap:.3g} vanishes")
    w = np.exp(-0.5 * beta * (E - E.min()))
    sqrt_pi = w / np.linalg.norm(w)
    # clamp round-off above one so the operator admits a block encoding
    if op.spectral_norm > 1:
        op = subnormalize(op, op.spectral_norm)
    return MarkovChainData(P=P, A=op, gap=gap, sqrt_pi=sqrt_pi)


def _basis(N: int, y: int) -> np.ndarray:
    v = np.zeros(N, dtype=complex)
    v[y] = 1.0
    return v


def _overlap_estimate(chain, y, g, seed, stage, delta, max_t, noise, workers):
    nu_p = g / 8
    t = math.ceil(math.log(1 / nu_p) / chain.gap)
    if t > max_t:
        raise GapTooSmall(f"t = {t} exceeds the budget {max_t}")
    model = monomial_model(t, g / 8)
    e = _basis(chain.A.dim, y)
    rep = estimate_amplitude(
        model, chain.A, e, e, noise=noise, seed=_sub_seed(seed, 1, stage), epsilon=g / 2, delta=delta, workers=workers
    )
    return rep, model, t


def mcmc_partition(
    ising: IsingModel,
    beta: float,
    y_init: int | None = None,
    eps_r: float = 0.1,
    delta: float = 0.1,
    seed: int = 0,
    *,
    n_draws: int = DEFAULT_Y_DRAWS,
    max_t: int = DEFAULT_MAX_T,
    noise: NoiseModel = NO_NOISE,
    workers: int = 1,
) -> UseCaseResult:
    """Relative-error Z from <y|Pi_pi|y> estimated with the monomial A^t.

    A bootstrap stage halves a guess g for <y|Pi_pi|y> until an estimate at
    additive error g/2 clears g, which certifies a lower bound pi_lower.
    The final stage sets nu' = nu/2 = eps_r pi_lower / 12, t from the gap and
    a statistical error eps_r pi_lower / 4, then inverts z -> e^{-beta E_y}/z.
    Half of delta is spent on the bootstrap, half on the final stage.

    Raises:
        GapTooSmall: If t exceeds ``max_t``.
        OverlapTooSmall: If the bootstrap reaches its floor.
    """
    if not 0 < eps_r < 1:
        raise ValidationError("eps_r must lie in (0, 1)")
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    chain = metropolis_discriminant(ising, beta)
    N = 2**ising.n_spins
    E = ising.energies
    if y_init is None:
        draws = np.random.default_rng(np.random.SeedSequence([int(seed), 0])).integers(0, N, size=n_draws)
        y_init = int(draws[np.argmin(E[draws])])
    if not 0 <= y_init < N:
        raise ValidationError("y_init out of range")
    stages = []
    g, stage = 0.5, 0
    while True:
        stage += 1
        rep, _, t = _overlap_estimate(chain, y_init, g, seed, stage, delta / 2 ** (stage + 1), max_t, noise, workers)
        z = rep.estimate.real
        stages.append({"g": g, "t": t, **_stage_summary(rep)})
        if z >= g:
            pi_lower = z - g / 2
            break
        g /= 2
        if g < BOOTSTRAP_FLOOR:
            raise OverlapTooSmall(f"<y|Pi|y> appears below {BOOTSTRAP_FLOOR}")
    nu_p = eps_r * pi_lower / 12
    nu = 2 * nu_p
    t = math.ceil(math.log(1 / nu_p) / chain.gap)
    if t > max_t:
        raise GapTooSmall(f"t = {t} exceeds the budget {max_t}")
    model = monomial_model(t, nu)
    e = _basis(N, y_init)
    eps_alg = eps_r * pi_lower / 2
    rep = estimate_amplitude(
        model, chain.A, e, e, noise=noise, seed=_sub_seed(seed, 2), epsilon=eps_alg, delta=delta / 2, workers=workers
    )
    z = rep.estimate.real
    if z < eps_alg:
        raise OverlapTooSmall("final estimate is not above its error bar")
    Z = math.exp(-beta * E[y_init]) / z
    log_term = math.log(1 / nu_p)  # = log(12 Z e^{beta E_y} / eps_r) with Z -> 1/pi_lower bound
    e_j = expected_degree(model)
    report = {
        "use_case": "mcmc_partition",
        "beta": beta,
        "eps_r": eps_r,
        "delta": delta,
        "y_init": y_init,
        "E_y": float(E[y_init]),
        "gap": chain.gap,
        "pi_lower": pi_lower,
        "nu_prime": nu_p,
        "nu": nu,
        "t": t,
        "k": model.k,
        "max_degree": model.max_degree,
        "one_norm": model.one_norm,
        "expected_degree": e_j,
        "ratio_expected_over_k": e_j / model.k,
        "ratio_bound": 1 / ((1 - nu) * math.sqrt(math.pi * math.log(2 / nu))),
        "formula_k": math.sqrt(2 / chain.gap) * log_term,
        "formula_expected_degree": math.sqrt(2 / (math.pi * chain.gap) * log_term),
        "samples": rep.extras["plan"]["S"],
        "bootstrap": stages,
        "final": _stage_summary(rep),
    }
    return UseCaseResult(value=float(Z), report=report)


# ---------------------------------------------------------------------- QITE


def _prepare(H) -> tuple[HermitianOperator, float]:
    op = H if isinstance(H, HermitianOperator) else new_hermitian(H)
    if op.spectral_norm > 1:
        alpha = op.spectral_norm
        return subnormalize(op, alpha), alpha
    return op, 1.0


def qite_partition(
    H,
    beta: float,
    eps_r: float = 0.1,
    delta: float = 0.1,
    seed: int = 0,
    *,
    noise: NoiseModel = NO_NOISE,
    workers: int = 1,
    mode: str = "shot",
) -> UseCaseResult:
    """Z = Tr[e^{-beta H}] via the paired estimator with O = D 1, rho = 1/D.

    f(H) = e^{-beta H / 2} so Tr[O f rho f] = Z. Z lies in
    [D e^{-beta}, D e^{beta}]; a bootstrap halves a guess G from D e^{beta}
    until an estimate at additive error G/4 clears G/2, giving Z_lower.
    The final stage uses additive error eps_r Z_lower. If ||H|| > 1 the
    operator is divided by its norm and beta multiplied by it.
    """
    if not 0 < eps_r < 1:
        raise ValidationError("eps_r must lie in (0, 1)")
    if not beta > 0:
        raise ValidationError("beta must be positive")
    op, alpha = _prepare(H)
    b = beta * alpha
    D = op.dim
    O = D * np.eye(D)
    rho = np.eye(D) / D
    f_sup = math.exp(b / 2)

    def run(eps, dlt, key):
        nu = nu_for_pair(eps, f_sup, D)
        nu = min(nu, f_sup / 2)
        model = exp_model(b, nu)
        rep = estimate_expectation(
            model, op, rho, O, noise=noise, mode=mode, seed=_sub_seed(seed, *key),
            epsilon=eps, delta=dlt, f_sup=f_sup, workers=workers,
        )
        return rep, model

    stages = []
    G, stage = D * math.exp(b), 0
    while True:
        stage += 1
        rep, _ = run(G / 4, delta / 2 ** (stage + 1), (1, stage))
        stages.append({"guess": G, **_stage_summary(rep)})
        if rep.estimate >= G / 2:
            z_lower = rep.estimate - G / 4
            break
        G /= 2
        if G < D * math.exp(-b) / 4:
            raise OverlapTooSmall("bootstrap fell below the a priori lower bound on Z")
    eps = eps_r * z_lower
    rep, model = run(eps, delta / 2, (2,))
    e_j = expected_degree(model)
    report = {
        "use_case": "qite_partition",
        "beta": beta,
        "alpha": alpha,
        "eps_r": eps_r,
        "delta": delta,
        "z_lower": z_lower,
        "epsilon": eps,
        "nu": model.nu,
        "k": model.k,
        "one_norm": model.one_norm,
        "expected_degree": e_j,
        "avg_queries_bound": math.sqrt(2 * b),
        "avg_queries_per_run": rep.avg_queries_per_run,
        "expected_queries_per_run": 2 * e_j,
        "samples": rep.extras["plan"]["S"],
        "bootstrap": stages,
        "final": _stage_summary(rep),
    }
    return UseCaseResult(value=float(rep.estimate), report=report)


# ---------------------------------------------------------------------- QLSS


def _qlss_setup(A, kappa):
    op, alpha = _prepare(A)
    lam = np.abs(op.eigenvalues)
    if np.min(lam) == 0:
        raise SpectrumInGap("matrix is singular")
    if kappa is None:
        kappa = 1.0 / float(np.min(lam))
    if np.any(lam < 1.0 / kappa * (1 - 1e-12)):
        raise SpectrumInGap(f"eigenvalue inside (-1/kappa, 1/kappa) for kappa={kappa}")
    # a cut-off at one leaves no room for the inverse model
    kappa = max(float(kappa), 1.0 + 1e-9)
    return op, alpha, kappa


def _unit(v, name) -> tuple[np.ndarray, float]:
    v = np.asarray(v, dtype=complex).reshape(-1)
    n = float(np.linalg.norm(v))
    if n == 0:
        raise ValidationError(f"{name} must be nonzero")
    return v / n, n


def qlss_amplitude(
    A,
    b_vec,
    phi,
    epsilon: float = 0.05,
    delta: float = 0.05,
    seed: int = 0,
    *,
    kappa: float | None = None,
    noise: NoiseModel = NO_NOISE,
    workers: int = 1,
) -> UseCaseResult:
    """Estimates <phi|A^{-1}|b> with the single-element estimator.

    b is normalized internally and the result rescaled, so the error target
    refers to <phi|A^{-1} b> for the vector as given; phi must be a unit vector.

    Raises:
        SpectrumInGap: If an eigenvalue lies inside the cut-off.
    """
    op, alpha, kappa = _qlss_setup(A, kappa)
    b, bn = _unit(b_vec, "b")
    phi, pn = _unit(phi, "phi")
    if abs(pn - 1) > 1e-10:
        raise ValidationError("phi must be a unit vector")
    eps_in = epsilon * alpha / bn
    nu = eps_in / 2
    model = inverse_model(kappa, nu)
    rep = estimate_amplitude(model, op, phi, b, noise=noise, seed=seed, epsilon=eps_in, delta=delta, workers=workers)
    value = rep.estimate * bn / alpha
    e_j = expected_degree(model)
    log_term = math.log(kappa / epsilon)
    report = {
        "use_case": "qlss_amplitude",
        "kappa": kappa,
        "alpha": alpha,
        "epsilon": epsilon,
        "delta": delta,
        "nu": nu,
        "k": model.k,
        "max_degree": model.max_degree,
        "one_norm": model.one_norm,
        "expected_degree": e_j,
        "samples": rep.extras["plan"]["S"],
        "formula_max_depth": kappa * log_term,
        "formula_expected_depth": kappa * math.sqrt(log_term),
        "final": _stage_summary(rep),
    }
    return UseCaseResult(value=complex(value), report=report)


def qlss_expectation(
    A,
    b_vec,
    O,
    epsilon: float = 0.05,
    delta: float = 0.05,
    seed: int = 0,
    *,
    kappa: float | None = None,
    noise: NoiseModel = NO_NOISE,
    workers: int = 1,
    mode: str = "shot",
) -> UseCaseResult:
    """Estimates <b|A^{-1} O A^{-1}|b> with the paired estimator.

    nu solves nu (2 kappa ||O|| + nu) = epsilon / 2, using kappa as the bound
    on ||A^{-1}||. O = 1 gives ||A^{-1} b||^2.
    """
    op, alpha, kappa = _qlss_setup(A, kappa)
    b, bn = _unit(b_vec, "b")
    Oop = O if isinstance(O, HermitianOperator) else new_hermitian(O)
    eps_in = epsilon * alpha**2 / bn**2
    nu = nu_for_pair(eps_in, kappa, Oop.spectral_norm)
    model = inverse_model(kappa, nu)
    rho = np.outer(b, b.conj())
    rep = estimate_expectation(
        model, op, rho, Oop, noise=noise, mode=mode, seed=seed,
        epsilon=eps_in, delta=delta, f_sup=kappa, workers=workers,
    )
    value = rep.estimate * bn**2 / alpha**2
    e_j = expected_degree(model)
    log_term = math.log(kappa**2 * Oop.spectral_norm / epsilon)
    report = {
        "use_case": "qlss_expectation",
        "kappa": kappa,
        "alpha": alpha,
        "epsilon": epsilon,
        "delta": delta,
        "nu": nu,
        "k": model.k,
        "max_degree": model.max_degree,
        "one_norm": model.one_norm,
        "expected_degree": e_j,
        "samples": rep.extras["plan"]["S"],
        "formula_max_depth": kappa * log_term,
        "formula_expected_depth": kappa * math.sqrt(log_term),
        "final": _stage_summary(rep),
    }
    return UseCaseResult(value=float(value), report=report)


# ---------------------------------------------------------------------- GSEE


@dataclass(frozen=True, eq=False)
class GseeProblem:
    """Ground-state energy search input.

    Attributes:
        H: Hamiltonian (divided by its norm if that exceeds one).
        psi: Probe state.
        eta: Promised overlap amplitude, |<psi|ground>|^2 >= eta^2.
        xi: Target precision on E_0.
    """

    H: HermitianOperator
    psi: np.ndarray
    eta: float
    xi: float

    @staticmethod
    def new(H, psi, eta: float, xi: float) -> "GseeProblem":
        op = H if isinstance(H, HermitianOperator) else new_hermitian(H)
        v, n = _unit(psi, "psi")
        if abs(n - 1) > 1e-10:
            raise ValidationError("psi must be a unit vector")
        if not 0 < eta <= 1:
            raise ValidationError("eta must lie in (0, 1]")
        if not 0 < xi < 1:
            raise ValidationError("xi must lie in (0, 1)")
        return GseeProblem(H=op, psi=v, eta=float(eta), xi=float(xi))


def ground_overlap(H: HermitianOperator, psi, tol: float = 1e-9) -> float:
    """|<psi|ground space>|^2 from the eigendecomposition."""
    lam = H.eigenvalues
    V = H.eigenvectors[:, lam <= lam[0] + tol]
    return float(np.sum(np.abs(V.conj().T @ np.asarray(psi, dtype=complex)) ** 2))


def filter_value(H: HermitianOperator, psi, y: float) -> float:
    """Exact F(y) = <psi|theta(y - H)|psi> (theta(0) = 1)."""
    c = np.abs(H.eigenvectors.conj().T @ np.asarray(psi, dtype=complex)) ** 2
    return float(np.sum(c[H.eigenvalues <= y]))


def gsee(
    problem: GseeProblem,
    delta: float = 0.1,
    seed: int = 0,
    *,
    noise: NoiseModel = NO_NOISE,
    workers: int = 1,
    mode: str = "shot",
) -> UseCaseResult:
    """Ground-state energy to precision xi by thresholding the filter F(y).

    The filter jumps by at least w = eta^2 at E_0. The grid has spacing
    h = xi/2 over [-1 + h, 1 - h]; the step model (built once at y*, band
    half-width h) has nu = w/6, and estimates carry statistical error w/6,
    all grid points reweighted from one set of shots. y counts as above E_0
    when F(y) > w/2. A binary search over the grid returns the first such
    point y_i and E_0 ~ y_i - h/2; every grid estimate is also checked for
    monotonicity within 2 (nu + radius).

    Raises:
        OverlapViolated: If the eigensolve shows the overlap promise fails.
        SearchInconsistent: If the thresholded filter is not monotone.
    """
    H, alpha = _prepare(problem.H)
    if ground_overlap(H, problem.psi) < problem.eta**2 * (1 - 1e-12):
        raise OverlapViolated("probe overlap with the ground space is below eta^2")
    xi = problem.xi / alpha
    h = xi / 2
    w = problem.eta**2
    nu = w / 6
    n = int(math.floor((2 - 2 * h) / h + 1e-9)) + 1
    grid = -1 + h + h * np.arange(n)
    grid = grid[grid <= 1 - h + 1e-12]
    model = step_model(h, nu, Y_STAR, y_range=(float(grid[0]), float(grid[-1])))
    reps = estimate_step_amplitude(
        model, H, problem.psi, noise=noise, seed=seed, y_targets=grid,
        epsilon=w / 3, delta=delta, workers=workers, mode=mode,
    )
    F = np.array([reps[float(y)].estimate for y in grid])
    rad = max(reps[float(y)].radius for y in grid)
    slack = 2 * (nu + rad)
    drop = np.maximum.accumulate(F) - F
    if np.max(drop) > slack:
        raise SearchInconsistent(f"filter estimate drops by {np.max(drop):.3g} > {slack:.3g}")
    above = F > w / 2
    lo, hi, trace = 0, len(grid), []
    while lo < hi:
        mid = (lo + hi) // 2
        trace.append({"y": float(grid[mid] * alpha), "F": float(F[mid]), "above": bool(above[mid])})
        if above[mid]:
            hi = mid
        else:
            lo = mid + 1
    if lo == len(grid):
        e0 = grid[-1] + h / 2
    else:
        e0 = grid[lo] - h / 2
    sample = reps[float(grid[0])]
    report = {
        "use_case": "gsee",
        "eta": problem.eta,
        "xi": problem.xi,
        "alpha": alpha,
        "delta": delta,
        "grid_spacing": h * alpha,
        "grid_size": int(len(grid)),
        "threshold": w / 2,
        "nu": nu,
        "sigma": model.meta["sigma"],
        "k": model.k,
        "max_degree": model.max_degree,
        "one_norm": model.one_norm,
        "second_one_norm": model.second_one_norm,
        "expected_degree": expected_degree(model),
        "samples": sample.extras["samples"],
        "shots_used": sample.shots_used,
        "max_radius": rad,
        "search_trace": trace,
        "filter": [[float(y * alpha), float(f)] for y, f in zip(grid, F)],
    }
    return UseCaseResult(value=float(e0 * alpha), report=report)
