"""Randomized estimators of Chebyshev-series matrix functions.

Every run draws a degree j with probability |a_j| / ||a||_1, executes one
Hadamard test, and records ||a||_1 sgn(a_j) b (single element) or
||a||_1^2 sgn(a_j) sgn(a_l) b omega (paired test). The empirical mean is an
unbiased estimate of the truncated series.

Shots are generated through their sufficient statistics: per-degree counts
are multinomial, and per-degree +1 counts are binomial (or multinomial over
(b, omega)). This is exact in law and lets sample counts reach 1e9 and more.
Shots are split into fixed blocks, each with its own seed derived from
(seed, stream, block), so results do not depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chebyshev import ChebyshevModel, degree_distribution, evaluate, query_depths, reweight_step
from .errors import EmptyStream, EpsilonExhausted, PlanMismatch, ValidationError
from .hadamard import (
    NO_NOISE,
    NoiseModel,
    check_density,
    had1_amplitudes,
    had1_circuit_mean,
    had2_joint,
    observable_projectors,
    perturb_oracle,
)
from .operators import HermitianOperator, QubitizedOracle, build_qubitized_oracle, new_hermitian

REPORT_SCHEMA = "rsqmp.estimate/1"
MIN_BLOCK = 1 << 16
MAX_BLOCKS = 64
RECORD_LIMIT = 2_000_000

STREAM_REAL, STREAM_IMAG, STREAM_PAIR, STREAM_CROSS, STREAM_T, STREAM_U = range(6)
PERTURB_STREAM = 1000


# ---------------------------------------------------------------- planning


@dataclass(frozen=True)
class SamplePlan:
    """Sample count meeting an (epsilon, delta) target.

    Attributes:
        P: 1 for amplitudes, 2 for expectation values.
        S: Samples per stream.
        epsilon: Total additive error target.
        delta: Failure probability.
        nu_budget: Approximation-error share nu^(P) charged against epsilon.
        one_norm: ||a||_1 of the model the plan was made for.
        obs_norm: ||O|| (1 for P = 1).
    """

    P: int
    S: int
    epsilon: float
    delta: float
    nu_budget: float
    one_norm: float
    obs_norm: float = 1.0

    @property
    def total_runs(self) -> int:
        return 2 * self.S if self.P == 1 else self.S

    def to_json(self) -> dict:
        return {
            "P": self.P,
            "S": self.S,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "nu_budget": self.nu_budget,
            "one_norm": self.one_norm,
            "obs_norm": self.obs_norm,
            "total_runs": self.total_runs,
        }


def plan_samples(
    P: int,
    one_norm: float,
    obs_norm: float = 1.0,
    epsilon: float = 0.1,
    delta: float = 0.05,
    nu: float = 0.0,
    f_sup: float | None = None,
) -> SamplePlan:
    """Hoeffding sample count for the single-element or paired estimator.

    S = 16 ||a||^2 / eps^2 ln(4/delta) for P = 1 and
    S = 8 ||O||^2 ||a||^4 / eps^2 ln(2/delta) for P = 2, which leaves a
    statistical error of eps/2; the remaining eps/2 is the budget for the
    approximation error nu^(1) = nu or nu^(2) = nu (2 ||f|| ||O|| + nu).

    Args:
        P: 1 or 2.
        one_norm: ||a||_1 of the sampled part.
        obs_norm: ||O|| (P = 2).
        epsilon: Total additive error.
        delta: Failure probability in (0, 1).
        nu: Approximation error of the model.
        f_sup: Bound on ||f(A)||; defaults to one_norm + nu.

    Raises:
        EpsilonExhausted: If nu^(P) exceeds epsilon / 2.
    """
    if P not in (1, 2):
        raise ValidationError("P must be 1 or 2")
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    if not one_norm > 0:
        raise ValidationError("one_norm must be positive")
    if P == 1:
        nu_p = nu
        S = math.ceil(16 * one_norm**2 / epsilon**2 * math.log(4 / delta))
    else:
        bound = one_norm + nu if f_sup is None else f_sup
        nu_p = nu * (2 * bound * obs_norm + nu)
        S = math.ceil(8 * obs_norm**2 * one_norm**4 / epsilon**2 * math.log(2 / delta))
    if nu_p > epsilon / 2:
        raise EpsilonExhausted(f"approximation error {nu_p:.3g} exceeds epsilon/2 = {epsilon / 2:.3g}")
    return SamplePlan(P=P, S=S, epsilon=epsilon, delta=delta, nu_budget=nu_p, one_norm=one_norm, obs_norm=obs_norm)


def hoeffding_radius(scaling: float, S: int, delta: float) -> float:
    """Two-sided radius for the mean of S samples in [-scaling, scaling] at level delta/2."""
    return scaling * math.sqrt(2 * math.log(4 / delta) / S)


def nu_for_pair(epsilon: float, f_sup: float, obs_norm: float) -> float:
    """Largest nu with nu (2 f_sup ||O|| + nu) <= epsilon / 2."""
    F = f_sup * obs_norm
    # shave one part in 1e12 so the budget check is not lost to rounding
    return epsilon / 2 / (F + math.sqrt(F * F + epsilon / 2)) * (1 - 1e-12)


# ----------------------------------------------------------------- reports


@dataclass
class EstimateReport:
    """Result of one estimator call.

    Attributes:
        estimate: Complex for amplitudes, real for expectation values.
        epsilon: Target additive error (includes the approximation budget).
        delta: Failure probability.
        radius: Statistical Hoeffding radius at confidence 1 - delta.
        shots_used: Number of circuit runs.
        total_queries: Oracle queries summed over all runs.
        avg_queries_per_run: total_queries / shots_used.
        degree_histogram: Query depth per run -> count.
        noise: Noise model used.
        seed: Master seed.
        extras: Stream-level details.
    """

    estimate: complex | float
    epsilon: float
    delta: float
    radius: float
    shots_used: int
    total_queries: int
    avg_queries_per_run: float
    degree_histogram: dict
    noise: NoiseModel
    seed: int
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        est = self.estimate
        if isinstance(est, complex):
            est_j = {"re": est.real, "im": est.imag}
        else:
            est_j = float(est)
        return {
            "schema": REPORT_SCHEMA,
            "estimate": est_j,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "radius": self.radius,
            "shots_used": self.shots_used,
            "total_queries": self.total_queries,
            "avg_queries_per_run": self.avg_queries_per_run,
            "degree_histogram": {str(k): int(v) for k, v in sorted(self.degree_histogram.items())},
            "noise": self.noise.to_json(),
            "seed": self.seed,
            "extras": self.extras,
        }


@dataclass(frozen=True)
class Aggregate:
    mean: float
    radius: float
    histogram: dict


def aggregate(values, scaling: float, delta: float = 0.05, depths=None) -> Aggregate:
    """Empirical mean, Hoeffding radius and depth histogram of a shot stream.

    Raises:
        EmptyStream: If the stream has no samples.
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise EmptyStream("no samples to aggregate")
    hist = {}
    if depths is not None:
        d, c = np.unique(np.asarray(depths, dtype=np.int64), return_counts=True)
        hist = {int(a): int(b) for a, b in zip(d, c)}
    return Aggregate(mean=float(np.mean(v)), radius=hoeffding_radius(scaling, v.size, delta), histogram=hist)


# ------------------------------------------------------------------ engine


def _block_sizes(S: int) -> list[int]:
    block = max(MIN_BLOCK, -(-S // MAX_BLOCKS))
    sizes = [block] * (S // block)
    if S % block:
        sizes.append(S % block)
    return sizes


def _block_rng(seed: int, stream: int, block: int, sub: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream, block, sub]))


def _map_blocks(fn, n: int, workers: int) -> list:
    if workers <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


@dataclass
class BinaryCounts:
    """Per-degree counts of a single-element stream."""

    n: np.ndarray
    plus: np.ndarray | None
    records: list | None = None


def run_binary_stream(
    probs: np.ndarray,
    means: np.ndarray,
    S: int,
    seed: int,
    stream: int,
    workers: int = 1,
    mode: str = "shot",
    record: bool = False,
) -> BinaryCounts:
    """Draws S runs: degree index ~ probs, then b = +1 with prob (1 + mean)/2."""
    if mode not in ("shot", "mean"):
        raise ValidationError(f"unknown mode {mode!r}")
    sizes = _block_sizes(S)
    pb = np.clip((1 + means) / 2, 0.0, 1.0)

    def block(i):
        rng = _block_rng(seed, stream, i)
        n = rng.multinomial(sizes[i], probs)
        plus = rng.binomial(n, pb) if mode == "shot" else None
        rec = None
        if record:
            idx = np.repeat(np.arange(probs.size), n)
            b = np.ones(idx.size, dtype=np.int8)
            if plus is not None:
                start = np.concatenate([[0], np.cumsum(n)[:-1]])
                for jj in np.nonzero(n)[0]:
                    b[start[jj] + plus[jj] : start[jj] + n[jj]] = -1
            order = _block_rng(seed, stream, i, 1).permutation(idx.size)
            rec = (idx[order], b[order])
        return n, plus, rec

    parts = _map_blocks(block, len(sizes), workers)
    n = np.sum([p[0] for p in parts], axis=0)
    plus = np.sum([p[1] for p in parts], axis=0) if mode == "shot" else None
    records = [p[2] for p in parts] if record else None
    return BinaryCounts(n=n, plus=plus, records=records)


@dataclass
class PairCounts:
    """Counts of a paired stream: n[j, l] and outcome counts c[j, l, b, m]."""

    n: np.ndarray
    outcomes: np.ndarray | None
    records: list | None = None


def run_pair_stream(
    probs_j: np.ndarray,
    probs_l: np.ndarray,
    laws: np.ndarray,
    S: int,
    seed: int,
    stream: int,
    workers: int = 1,
    mode: str = "shot",
    record: bool = False,
) -> PairCounts:
    """Draws S paired runs.

    Args:
        probs_j: Law of the first degree index.
        probs_l: Law of the second degree index (independent of the first).
        laws: Array (J, L, 2, M) of joint (b, omega) probabilities per pair.
    """
    if mode not in ("shot", "mean"):
        raise ValidationError(f"unknown mode {mode!r}")
    J, L, _, M = laws.shape
    pair_p = np.outer(probs_j, probs_l).reshape(-1)
    pair_p = pair_p / pair_p.sum()
    flat = laws.reshape(J * L, 2 * M)
    flat = flat / flat.sum(axis=1, keepdims=True)
    sizes = _block_sizes(S)

    def block(i):
        rng = _block_rng(seed, stream, i)
        n = rng.multinomial(sizes[i], pair_p)
        out = None
        if mode == "shot":
            nz = np.nonzero(n)[0]
            out = np.zeros((J * L, 2 * M), dtype=np.int64)
            if nz.size:
                out[nz] = rng.multinomial(n[nz], flat[nz])
        rec = None
        if record:
            pair = np.repeat(np.arange(J * L), n)
            if out is not None:
                oc = np.concatenate([np.repeat(np.arange(2 * M), out[p]) for p in np.nonzero(n)[0]]) if pair.size else np.zeros(0, dtype=np.int64)
            else:
                oc = np.full(pair.size, -1)
            order = _block_rng(seed, stream, i, 1).permutation(pair.size)
            rec = (pair[order], oc[order])
        return n, out, rec

    parts = _map_blocks(block, len(sizes), workers)
    n = np.sum([p[0] for p in parts], axis=0).reshape(J, L)
    outcomes = None
    if mode == "shot":
        outcomes = np.sum([p[1] for p in parts], axis=0).reshape(J, L, 2, M)
    records = [p[2] for p in parts] if record else None
    return PairCounts(n=n, outcomes=outcomes, records=records)


# ------------------------------------------------------------ exact values


def _operator(A) -> HermitianOperator:
    if isinstance(A, QubitizedOracle):
        return A.source
    if isinstance(A, HermitianOperator):
        return A
    return new_hermitian(A)


def model_matrix(model: ChebyshevModel, A) -> np.ndarray:
    """f~(A) for the truncated series, evaluated on the spectrum."""
    op = _operator(A)
    return op.spectral_function(evaluate(model, np.clip(op.eigenvalues, -1, 1)))


def exact_amplitude(model: ChebyshevModel, A, phi, psi) -> complex:
    """<phi|f~(A)|psi> from the spectral decomposition."""
    phi = np.asarray(phi, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    return complex(phi.conj() @ model_matrix(model, A) @ psi)


def exact_expectation(model: ChebyshevModel, A, rho, O) -> float:
    """Tr[O f~(A) rho f~(A)] from the spectral decomposition."""
    F = model_matrix(model, A)
    return float(np.trace(np.asarray(O) @ F @ np.asarray(rho) @ F.conj().T).real)


def _oracle_for(A, noise: NoiseModel, seed: int) -> QubitizedOracle:
    if isinstance(A, QubitizedOracle):
        return A
    op = _operator(A)
    if noise.kind == "coherent":
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), PERTURB_STREAM]))
        return perturb_oracle(op, noise.eps_be, rng)
    return build_qubitized_oracle(op)


def _degree_means(oracle, degrees, phi, psi, kind, noise, backend) -> tuple[np.ndarray, np.ndarray]:
    """Noisy real and imaginary means per query depth."""
    if backend == "spectral":
        z = had1_amplitudes(oracle.source, degrees, phi, psi, kind)
        damp = noise.damping(degrees)
        return z.real * damp, z.imag * damp
    if backend == "circuit":
        re = np.array([had1_circuit_mean(oracle, int(d), phi, psi, "real", kind, noise) for d in degrees])
        im = np.array([had1_circuit_mean(oracle, int(d), phi, psi, "imag", kind, noise) for d in degrees])
        return re, im
    raise ValidationError(f"unknown backend {backend!r}")


def series_mean(model: ChebyshevModel, A, phi, psi, noise: NoiseModel = NO_NOISE, seed: int = 0) -> complex:
    """Exact expectation of the single-element estimator under noise.

    This is the analytic path: sum_j a_j (1-p)^j <phi|T_j|psi> plus the
    constant term; with coherent noise the perturbed oracle is used.
    """
    oracle = _oracle_for(A, noise, seed)
    dist = degree_distribution(model)
    out = model.constant * complex(np.vdot(np.asarray(phi, complex), np.asarray(psi, complex)))
    for part, kind in (("first", "first"), ("second", "second")):
        if part not in dist.parts:
            continue
        d, c, _ = dist.parts[part]
        re, im = _degree_means(oracle, query_depths(part, d), phi, psi, kind, noise, "spectral")
        out += complex(np.sum(c * (re + 1j * im)))
    return out


# ------------------------------------------------------- Algorithm 1 (P = 1)


def _histogram(depths: np.ndarray, counts: np.ndarray) -> dict:
    hist: dict[int, int] = {}
    for d, n in zip(depths, counts):
        if n:
            hist[int(d)] = hist.get(int(d), 0) + int(n)
    return hist


def _merge_hist(*hists: dict) -> dict:
    out: dict[int, int] = {}
    for h in hists:
        for k, v in h.items():
            out[k] = out.get(k, 0) + v
    return out


def _shot_rows(records, part_label, depths, alpha0=0) -> list:
    rows = []
    alpha = alpha0
    for rec in records:
        idx, b = rec
        for i, bb in zip(idx, b):
            rows.append((alpha, part_label, int(depths[i]), "", int(bb), "", int(depths[i])))
            alpha += 1
    return rows


def estimate_amplitude(
    model: ChebyshevModel,
    A,
    phi,
    psi,
    plan: SamplePlan | None = None,
    noise: NoiseModel = NO_NOISE,
    mode: str = "shot",
    seed: int = 0,
    *,
    epsilon: float | None = None,
    delta: float | None = None,
    workers: int = 1,
    backend: str = "spectral",
    record_shots: bool = False,
) -> EstimateReport:
    """Algorithm 1: estimate <phi|f~(A)|psi> from single-element tests.

    Runs S tests for the real part and S with the S-dagger phase for the
    imaginary part. The model constant times <phi|psi> is added exactly.

    Args:
        model: First-kind-only model.
        A: HermitianOperator, matrix, or a prepared QubitizedOracle.
        phi: Left unit vector.
        psi: Right unit vector.
        plan: Plan with P = 1 for this model; built from epsilon and delta
            when omitted.
        noise: Oracle noise.
        mode: "shot" (exact law of b) or "mean" (degenerate exact means).
        seed: Master seed.
        epsilon: Target error when no plan is given.
        delta: Failure probability when no plan is given.
        workers: Thread count; results do not depend on it.
        backend: "spectral" or "circuit" for per-degree means.
        record_shots: Keep per-shot rows in ``extras["shots"]``.

    Raises:
        PlanMismatch: If the plan is not a P = 1 plan for this model's norm,
            or the model has a second-kind part.
    """
    if model.second_degrees.size and np.any(model.second_coeffs):
        raise PlanMismatch("single-element estimator needs a first-kind-only model")
    norm = degree_distribution(model).one_norms["first"]
    if plan is None:
        if epsilon is None or delta is None:
            raise ValidationError("give a plan or epsilon and delta")
        plan = plan_samples(1, norm, 1.0, epsilon, delta, nu=model.nu)
    if plan.P != 1 or abs(plan.one_norm - norm) > 1e-9 * max(1.0, norm):
        raise PlanMismatch(f"plan (P={plan.P}, ||a||={plan.one_norm}) does not fit model (||a||={norm})")
    if plan.S * 2 > RECORD_LIMIT and record_shots:
        raise ValidationError(f"shot logs are limited to {RECORD_LIMIT} runs")
    phi = np.asarray(phi, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    oracle = _oracle_for(A, noise, seed)
    dist = degree_distribution(model)
    d, c, p = dist.parts["first"]
    signs = np.sign(c)
    re_m, im_m = _degree_means(oracle, d, phi, psi, "first", noise, backend)
    sums, hist, total_q, rows = [], {}, 0, []
    for stream, means, label in ((STREAM_REAL, re_m, "real"), (STREAM_IMAG, im_m, "imag")):
        cnt = run_binary_stream(p, means, plan.S, seed, stream, workers, mode, record_shots)
        if mode == "shot":
            sums.append(norm * float(np.sum(signs * (2 * cnt.plus - cnt.n))))
        else:
            sums.append(norm * float(np.sum(signs * cnt.n * means)))
        hist = _merge_hist(hist, _histogram(d, cnt.n))
        total_q += int(np.sum(cnt.n * d))
        if record_shots:
            rows += _shot_rows(cnt.records, label, d, len(rows))
    z = complex(sums[0], sums[1]) / plan.S
    z += model.constant * complex(np.vdot(phi, psi))
    shots = 2 * plan.S
    extras = {"plan": plan.to_json(), "mode": mode, "backend": backend, "one_norm": norm}
    if noise.kind == "coherent":
        extras["perturbation"] = dict(oracle.info)
    if record_shots:
        extras["shots"] = rows
    return EstimateReport(
        estimate=z,
        epsilon=plan.epsilon,
        delta=plan.delta,
        radius=math.sqrt(2) * hoeffding_radius(norm, plan.S, plan.delta),
        shots_used=shots,
        total_queries=total_q,
        avg_queries_per_run=total_q / shots,
        degree_histogram=hist,
        noise=noise,
        seed=seed,
        extras=extras,
    )


# ------------------------------------------------------- Algorithm 2 (P = 2)


def pair_laws(
    oracle: QubitizedOracle,
    degrees_j: np.ndarray,
    degrees_l: np.ndarray,
    rho: np.ndarray,
    O,
    noise: NoiseModel = NO_NOISE,
    backend: str = "spectral",
) -> tuple[np.ndarray, np.ndarray]:
    """Joint (b, omega) laws for every degree pair.

    Returns:
        (omegas, laws) with laws of shape (J, L, 2, M).
    """
    if backend == "circuit":
        omegas, _ = observable_projectors(O)
        laws = np.zeros((degrees_j.size, degrees_l.size, 2, omegas.size))
        for a, j in enumerate(degrees_j):
            for b, l in enumerate(degrees_l):
                laws[a, b] = had2_joint(oracle, int(j), int(l), rho, O, noise, "circuit").probs
        return omegas, laws
    if backend != "spectral":
        raise ValidationError(f"unknown backend {backend!r}")
    A = oracle.source
    omegas, bases = observable_projectors(O)
    W = np.concatenate(bases, axis=1)
    group = np.concatenate([np.full(B.shape[1], m) for m, B in enumerate(bases)])
    G = np.zeros((W.shape[1], omegas.size))
    G[np.arange(W.shape[1]), group] = 1.0
    theta = np.arccos(np.clip(A.eigenvalues, -1, 1))
    VW = W.conj().T @ A.eigenvectors  # O-eigenbasis <- A-eigenbasis

    def mats(degrees, fn):
        vals = fn(np.outer(degrees, theta))  # (J, D)
        return np.einsum("ia,ja,ka->jik", VW, vals, VW.conj())

    Tj, Sj = mats(degrees_j, np.cos), mats(degrees_j, np.sin)
    Tl, Sl = mats(degrees_l, np.cos), mats(degrees_l, np.sin)
    R = W.conj().T @ rho @ W
    D = R.shape[0]

    def kdiag(T, S):
        XT = T @ R
        XS = S @ R
        return (np.einsum("jia,jai->ji", XT, T) + np.einsum("jia,jai->ji", XS, S)).real @ G

    dj, dl = kdiag(Tj, Sj), kdiag(Tl, Sl)
    cross = np.einsum("jia,lai->jli", Tj @ R, Tl).real @ G  # (J, L, M)
    diag = 0.25 * (dj[:, None, :] + dl[None, :, :])
    q = noise.damping(np.add.outer(degrees_j, degrees_l))[:, :, None]
    mixed = 0.5 * G.sum(axis=0) / D
    plus = q * (diag + 0.5 * cross) + (1 - q) * mixed
    minus = q * (diag - 0.5 * cross) + (1 - q) * mixed
    laws = np.stack([plus, minus], axis=2)
    return omegas, np.clip(laws, 0.0, None)


def _pair_sum(signs_j, signs_l, laws, counts: PairCounts, omegas, mode) -> float:
    sgn = np.outer(signs_j, signs_l)
    if mode == "shot":
        bw = counts.outcomes[:, :, 0, :] - counts.outcomes[:, :, 1, :]
        return float(np.sum(sgn * (bw @ omegas)))
    means = (laws[:, :, 0, :] - laws[:, :, 1, :]) @ omegas
    return float(np.sum(sgn * counts.n * means))


def estimate_expectation(
    model: ChebyshevModel,
    A,
    rho,
    O,
    plan: SamplePlan | None = None,
    noise: NoiseModel = NO_NOISE,
    mode: str = "shot",
    seed: int = 0,
    *,
    epsilon: float | None = None,
    delta: float | None = None,
    f_sup: float | None = None,
    workers: int = 1,
    backend: str = "spectral",
    record_shots: bool = False,
) -> EstimateReport:
    """Algorithm 2: estimate Tr[O f~(A) rho f~(A)] from paired tests.

    Degrees j and l are drawn independently from p; each run records
    ||a||^2 sgn(a_j) sgn(a_l) b omega. A nonzero model constant c adds the
    exact term c^2 Tr[O rho] and a cross term 2c Re Tr[O g(A) rho] estimated
    by a second paired stream with l = 0; the statistical budget is then
    split evenly between the two streams.

    Raises:
        PlanMismatch: If the plan is not a P = 2 plan for this model, or a
            plan is given for a model with a constant.
        InvalidDensityMatrix: If rho is not a valid state.
    """
    if model.second_degrees.size and np.any(model.second_coeffs):
        raise PlanMismatch("paired estimator needs a first-kind-only model")
    R = check_density(rho)
    Oop = O if isinstance(O, HermitianOperator) else new_hermitian(O)
    O_mat = Oop.entries
    obs_norm = Oop.spectral_norm
    dist = degree_distribution(model)
    norm = dist.one_norms["first"]
    c0 = model.constant
    if plan is None:
        if epsilon is None or delta is None:
            raise ValidationError("give a plan or epsilon and delta")
        plan = plan_samples(2, norm, obs_norm, epsilon, delta, nu=model.nu, f_sup=f_sup)
        if c0 != 0:
            # both streams at radius eps/4 and level delta/2
            S_main = math.ceil(2 * (obs_norm * norm**2) ** 2 * math.log(4 / delta) / (epsilon / 4) ** 2)
            plan = SamplePlan(2, S_main, epsilon, delta, plan.nu_budget, norm, obs_norm)
    elif c0 != 0:
        raise PlanMismatch("models with a constant term need an internally built plan")
    if plan.P != 2 or abs(plan.one_norm - norm) > 1e-9 * max(1.0, norm) or plan.obs_norm < obs_norm * (1 - 1e-12):
        raise PlanMismatch(f"plan (P={plan.P}, ||a||={plan.one_norm}) does not fit model (||a||={norm})")
    oracle = _oracle_for(A, noise, seed)
    d, c, p = dist.parts["first"]
    signs = np.sign(c)
    omegas, laws = pair_laws(oracle, d, d, R, O_mat, noise, backend)
    cnt = run_pair_stream(p, p, laws, plan.S, seed, STREAM_PAIR, workers, mode, record_shots and plan.S <= RECORD_LIMIT)
    total = norm**2 * _pair_sum(signs, signs, laws, cnt, omegas, mode) / plan.S
    depth = np.add.outer(d, d)
    hist = _histogram(depth.reshape(-1), cnt.n.reshape(-1))
    total_q = int(np.sum(cnt.n * depth))
    shots = plan.S
    extras = {"plan": plan.to_json(), "mode": mode, "backend": backend, "one_norm": norm}
    radius = hoeffding_radius(obs_norm * norm**2, plan.S, 2 * plan.delta)
    if c0 != 0:
        half = plan.delta / 2
        radius = hoeffding_radius(obs_norm * norm**2, plan.S, 2 * half)
        S_cross = math.ceil(2 * (2 * abs(c0) * obs_norm * norm) ** 2 * math.log(4 / plan.delta) / (plan.epsilon / 4) ** 2)
        zero = np.zeros(1, dtype=np.int64)
        _, laws0 = pair_laws(oracle, d, zero, R, O_mat, noise, backend)
        cc = run_pair_stream(p, np.ones(1), laws0, S_cross, seed, STREAM_CROSS, workers, mode)
        cross = 2 * c0 * norm * _pair_sum(signs, np.ones(1), laws0, cc, omegas, mode) / S_cross
        total += cross + c0**2 * float(np.trace(O_mat @ R).real)
        radius += hoeffding_radius(2 * abs(c0) * obs_norm * norm, S_cross, 2 * half)
        hist = _merge_hist(hist, _histogram(d, cc.n[:, 0]))
        total_q += int(np.sum(cc.n[:, 0] * d))
        shots += S_cross
        extras["cross_samples"] = S_cross
    if noise.kind == "coherent":
        extras["perturbation"] = dict(oracle.info)
    if record_shots and cnt.records is not None:
        rows = []
        J = d.size
        M = omegas.size
        for pair, oc in cnt.records:
            for pi, o in zip(pair, oc):
                a_, b_ = divmod(int(pi), J)
                if o >= 0:
                    bi, m = divmod(int(o), M)
                    rows.append((len(rows), "pair", int(d[a_]), int(d[b_]), 1 - 2 * bi, float(omegas[m]), int(d[a_] + d[b_])))
                else:
                    rows.append((len(rows), "pair", int(d[a_]), int(d[b_]), "", "", int(d[a_] + d[b_])))
        extras["shots"] = rows
    return EstimateReport(
        estimate=float(total),
        epsilon=plan.epsilon,
        delta=plan.delta,
        radius=radius,
        shots_used=shots,
        total_queries=total_q,
        avg_queries_per_run=total_q / shots,
        degree_histogram=hist,
        noise=noise,
        seed=seed,
        extras=extras,
    )


def pair_series_mean(model: ChebyshevModel, A, rho, O, noise: NoiseModel = NO_NOISE, seed: int = 0) -> float:
    """Exact expectation of the paired estimator under noise (analytic path)."""
    oracle = _oracle_for(A, noise, seed)
    dist = degree_distribution(model)
    d, c, _ = dist.parts["first"]
    R = check_density(rho)
    O_mat = O.entries if isinstance(O, HermitianOperator) else np.asarray(O, dtype=complex)
    omegas, laws = pair_laws(oracle, d, d, R, O_mat, noise)
    means = (laws[:, :, 0, :] - laws[:, :, 1, :]) @ omegas
    out = float(np.sum(np.outer(c, c) * means))
    if model.constant != 0:
        _, laws0 = pair_laws(oracle, d, np.zeros(1, dtype=np.int64), R, O_mat, noise)
        m0 = ((laws0[:, :, 0, :] - laws0[:, :, 1, :]) @ omegas)[:, 0]
        out += 2 * model.constant * float(np.sum(c * m0))
        out += model.constant**2 * float(np.trace(O_mat @ R).real)
    return out


# ----------------------------------------------------- step-function streams


def estimate_step_amplitude(
    step_model: ChebyshevModel,
    A,
    psi,
    plan: SamplePlan | None = None,
    noise: NoiseModel = NO_NOISE,
    seed: int = 0,
    y_targets=None,
    *,
    epsilon: float | None = None,
    delta: float | None = None,
    workers: int = 1,
    mode: str = "shot",
    backend: str = "spectral",
) -> dict:
    """Estimates <psi|theta(y - A)|psi> at several y from one set of shots.

    Two real-part streams are run on the y* model: single-element tests for
    the T part and second-kind tests for the sqrt(1 - x^2) U part. Samples
    are reweighted per y, so no new shots are needed per target. Each stream
    gets a statistical radius of epsilon/4 at level delta / (2 n_y); the
    approximation error must fit in the other epsilon/2.

    Returns:
        Dict y -> EstimateReport.
    """
    if plan is not None:
        epsilon, delta = plan.epsilon, plan.delta
    if epsilon is None or delta is None:
        raise ValidationError("give a plan or epsilon and delta")
    if step_model.nu > epsilon / 2:
        raise EpsilonExhausted(f"model error {step_model.nu} exceeds epsilon/2")
    ys = [float(v) for v in (y_targets if y_targets is not None else [step_model.params["y"]])]
    oracle = _oracle_for(A, noise, seed)
    psi = np.asarray(psi, dtype=complex)
    weights = {y: reweight_step(step_model, y) for y in ys}
    level = delta / (2 * len(ys))
    r = epsilon / 4
    streams = {}
    for part, kind, stream_id, widx in (("first", "first", STREAM_T, 0), ("second", "second", STREAM_U, 1)):
        degs = step_model.first_degrees if part == "first" else step_model.second_degrees
        coeffs = step_model.first_coeffs if part == "first" else step_model.second_coeffs
        norm = float(np.sum(np.abs(coeffs)))
        wmax = max(float(np.max(np.abs(weights[y][widx]))) for y in ys)
        S = math.ceil(2 * (norm * wmax) ** 2 * math.log(2 / level) / r**2)
        depths = query_depths(part, degs)
        p = np.abs(coeffs) / norm
        means, _ = _degree_means(oracle, depths, psi, psi, kind, noise, backend)
        cnt = run_binary_stream(p, means, S, seed, stream_id, workers, mode)
        streams[part] = (norm, np.sign(coeffs), depths, means, cnt, S, widx)
    out = {}
    for y in ys:
        est, rad, shots, tq, hist = step_model.constant, 0.0, 0, 0, {}
        for part, (norm, sgn, depths, means, cnt, S, widx) in streams.items():
            w = weights[y][widx]
            if mode == "shot":
                est += norm * float(np.sum(sgn * w * (2 * cnt.plus - cnt.n))) / S
            else:
                est += norm * float(np.sum(sgn * w * cnt.n * means)) / S
            rad += norm * float(np.max(np.abs(w))) * math.sqrt(2 * math.log(2 / level) / S)
            shots += S
            tq += int(np.sum(cnt.n * depths))
            hist = _merge_hist(hist, _histogram(depths, cnt.n))
        out[y] = EstimateReport(
            estimate=float(est),
            epsilon=epsilon,
            delta=delta,
            radius=rad,
            shots_used=shots,
            total_queries=tq,
            avg_queries_per_run=tq / shots,
            degree_histogram=hist,
            noise=noise,
            seed=seed,
            extras={"y": y, "samples": {k: v[5] for k, v in streams.items()}, "mode": mode},
        )
    return out


def step_series_mean(step_model: ChebyshevModel, A, psi, y: float, noise: NoiseModel = NO_NOISE, seed: int = 0) -> float:
    """Exact mean of the reweighted step estimator at y."""
    oracle = _oracle_for(A, noise, seed)
    wT, wU = reweight_step(step_model, y)
    psi = np.asarray(psi, dtype=complex)
    tot = step_model.constant
    for degs, coeffs, w, part, kind in (
        (step_model.first_degrees, step_model.first_coeffs, wT, "first", "first"),
        (step_model.second_degrees, step_model.second_coeffs, wU, "second", "second"),
    ):
        m, _ = _degree_means(oracle, query_depths(part, degs), psi, psi, kind, noise, "spectral")
        tot += float(np.sum(coeffs * w * m))
    return tot


# ------------------------------------------------------- noise sensitivity


def depolarizing_bias(model: ChebyshevModel, A, phi, psi, p: float) -> dict:
    """Bias of the single-element estimator under depolarizing noise.

    Returns the exact bias of the estimator mean, the closed form
    sum_j a_j ((1-p)^j - 1) m_j, p E_sq with E_sq = |sum_j j a_j m_j|, and
    the bound p ||a||_1 E[j].
    """
    noise = NoiseModel("depolarizing", p=p)
    ideal = series_mean(model, A, phi, psi)
    noisy = series_mean(model, A, phi, psi, noise)
    op = _operator(A)
    d, c = model.first_degrees, model.first_coeffs
    m = had1_amplitudes(op, d, phi, psi, "first")
    closed = complex(np.sum(c * ((1 - p) ** d - 1) * m))
    e_sq = abs(complex(np.sum(d * c * m)))
    norm = float(np.sum(np.abs(c)))
    e_j = float(np.sum(d * np.abs(c)) / norm)
    return {
        "bias": abs(noisy - ideal),
        "signed_bias": noisy - ideal,
        "closed_form": closed,
        "p_e_sq": p * e_sq,
        "bound": p * norm * e_j,
    }


def depolarizing_bias_pair(model: ChebyshevModel, A, rho, O, p: float) -> dict:
    """Paired-estimator analogue of :func:`depolarizing_bias`."""
    noise = NoiseModel("depolarizing", p=p)
    ideal = pair_series_mean(model, A, rho, O)
    noisy = pair_series_mean(model, A, rho, O, noise)
    op = _operator(A)
    d, c = model.first_degrees, model.first_coeffs
    oracle = build_qubitized_oracle(op)
    R = check_density(rho)
    O_mat = O.entries if isinstance(O, HermitianOperator) else np.asarray(O, dtype=complex)
    omegas, laws = pair_laws(oracle, d, d, R, O_mat)
    M = (laws[:, :, 0, :] - laws[:, :, 1, :]) @ omegas
    jl = np.add.outer(d, d)
    cc = np.outer(c, c)
    closed = float(np.sum(cc * ((1 - p) ** jl - 1) * M))
    e_sq = abs(float(np.sum(jl * cc * M)))
    norm = float(np.sum(np.abs(c)))
    e_j = float(np.sum(d * np.abs(c)) / norm)
    return {
        "bias": abs(noisy - ideal),
        "signed_bias": noisy - ideal,
        "closed_form": closed,
        "p_e_sq": p * e_sq,
        "bound": 2 * p * norm**2 * e_j,
    }


def fully_quantum_reference(model: ChebyshevModel, A, phi, psi, p: float) -> dict:
    """Noisy mean of a coherent circuit that always makes k queries.

    Every query is followed by the depolarizing channel, so the mean is
    damped by (1 - p)^k; the bias is bounded by p k |<phi|f~(A)|psi>|.
    """
    ideal = exact_amplitude(model, A, phi, psi)
    k = model.max_degree
    noisy = (1 - p) ** k * ideal
    return {
        "ideal": ideal,
        "noisy": noisy,
        "bias": abs(noisy - ideal),
        "bound": p * k * abs(ideal),
        "k": k,
    }
