"""Sample planning and the two randomized estimators."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rsqmp.chebyshev import (
    Y_STAR,
    custom_model,
    evaluate,
    exp_model,
    expected_degree,
    monomial_model,
    step_model,
    step_model_at,
)
from rsqmp.errors import EmptyStream, EpsilonExhausted, InvalidDensityMatrix, PlanMismatch, ValidationError
from rsqmp.estimator import (
    aggregate,
    estimate_amplitude,
    estimate_expectation,
    estimate_step_amplitude,
    exact_amplitude,
    exact_expectation,
    hoeffding_radius,
    nu_for_pair,
    pair_series_mean,
    plan_samples,
    series_mean,
    step_series_mean,
)
from rsqmp.hadamard import NoiseModel
from rsqmp.operators import new_hermitian, random_hermitian, random_state


def _inst(seed, D=8, norm=0.9):
    r = np.random.default_rng(seed)
    A = new_hermitian(random_hermitian(D, r, norm))
    return A, random_state(D, r), random_state(D, r), random_hermitian(D, r, 1.0)


# ---------------------------------------------------------------- planning


def test_plan_examples():
    assert plan_samples(1, 1.0, epsilon=0.1, delta=0.05).S == math.ceil(1600 * math.log(80)) == 7012
    assert plan_samples(2, 1.0, 1.0, epsilon=0.1, delta=0.05).S == math.ceil(800 * math.log(40)) == 2952
    plan = plan_samples(1, 1.0, epsilon=0.1, delta=0.05)
    assert plan.total_runs == 2 * plan.S
    assert plan_samples(2, 1.0, epsilon=0.1, delta=0.05).total_runs == 2952


@given(st.floats(0.1, 10), st.floats(0.01, 1), st.floats(0.001, 0.5))
def test_plan_scales_with_norm(norm, eps, delta):
    a = plan_samples(1, norm, epsilon=eps, delta=delta)
    b = plan_samples(1, 2 * norm, epsilon=eps, delta=delta)
    exact = 16 * norm**2 / eps**2 * math.log(4 / delta)
    assert a.S == math.ceil(exact)
    # doubling the norm quadruples the formula value before rounding
    assert b.S == math.ceil(4 * exact)


def test_plan_budget_and_errors():
    with pytest.raises(EpsilonExhausted):
        plan_samples(1, 1.0, epsilon=0.1, delta=0.1, nu=0.06)
    plan = plan_samples(2, 1.0, 1.0, epsilon=0.1, delta=0.1, nu=0.01, f_sup=1.0)
    assert plan.nu_budget == pytest.approx(0.01 * (2 + 0.01))
    nu = nu_for_pair(0.1, 1.0, 1.0)
    assert nu * (2 + nu) <= 0.05
    plan_samples(2, 1.0, 1.0, epsilon=0.1, delta=0.1, nu=nu, f_sup=1.0)
    with pytest.raises(ValidationError):
        plan_samples(3, 1.0)
    with pytest.raises(ValidationError):
        plan_samples(1, 1.0, delta=1.0)


def test_hoeffding_radius_inverts_plan():
    plan = plan_samples(1, 1.3, epsilon=0.2, delta=0.05)
    r = hoeffding_radius(1.3, plan.S, plan.delta)
    # each of the real and imaginary parts gets eps / (2 sqrt 2), so the modulus gets eps / 2
    assert r <= 0.2 / (2 * math.sqrt(2)) * (1 + 1e-9)
    assert r == pytest.approx(0.2 / (2 * math.sqrt(2)), rel=1e-3)


# -------------------------------------------------------- trivial examples


def test_constant_series_gives_one():
    psi = random_state(4, np.random.default_rng(0))
    A = new_hermitian(random_hermitian(4, np.random.default_rng(1), 0.5))
    rep = estimate_amplitude(custom_model({0: 1.0}), A, psi, psi, epsilon=0.1, delta=0.1)
    # every real-part shot has b = +1; the imaginary part is a fair coin around 0
    assert rep.estimate.real == pytest.approx(1.0, abs=1e-12)
    assert abs(rep.estimate.imag) <= rep.radius


def test_diag_square_example():
    A = np.diag([1.0, -1.0])
    e0 = np.array([1.0, 0.0])
    rep = estimate_amplitude(monomial_model(2, 1e-3), A, e0, e0, epsilon=0.05, delta=0.05, seed=3)
    assert abs(rep.estimate - 1.0) <= rep.radius


def test_expectation_trivial_models():
    A, _, psi, O = _inst(2, D=4)
    rho = np.outer(psi, psi.conj())
    rep = estimate_expectation(custom_model({0: 1.0}), A, rho, O, epsilon=0.1, delta=0.1, seed=1)
    assert rep.estimate == pytest.approx(np.trace(O @ rho).real, abs=0.05)
    # O = I on an eigenstate gives f~(lambda)^2
    lam, V = A.eigenvalues[1], A.eigenvectors[:, 1]
    m = monomial_model(3, 1e-3)
    rep = estimate_expectation(m, A, np.outer(V, V.conj()), np.eye(4), epsilon=0.05, delta=0.05, seed=2)
    assert abs(rep.estimate - evaluate(m, lam) ** 2) <= 0.05


def test_plan_mismatch_and_validation():
    A, phi, psi, O = _inst(0, D=4)
    m = monomial_model(5, 1e-3)
    wrong = plan_samples(1, 2 * m.one_norm, epsilon=0.1, delta=0.1)
    with pytest.raises(PlanMismatch):
        estimate_amplitude(m, A, phi, psi, wrong)
    with pytest.raises(PlanMismatch):
        estimate_amplitude(step_model(0.2, 1e-2), A, phi, psi, epsilon=0.1, delta=0.1)
    p2 = plan_samples(2, m.one_norm, 1.0, epsilon=0.1, delta=0.1)
    with pytest.raises(PlanMismatch):
        estimate_amplitude(m, A, phi, psi, p2)
    with pytest.raises(PlanMismatch):
        estimate_expectation(custom_model({1: 0.3}), A, np.outer(psi, psi.conj()), O, p2)
    with pytest.raises(InvalidDensityMatrix):
        estimate_expectation(m, A, np.eye(4), O, epsilon=0.1, delta=0.1)
    with pytest.raises(ValidationError):
        estimate_amplitude(m, A, phi, psi)


# ------------------------------------------------------ statistical checks


def test_unbiased_and_covering_single_element():
    A, phi, psi, _ = _inst(11)
    m = monomial_model(9, 1e-3)
    exact = exact_amplitude(m, A, phi, psi)
    ests = np.array(
        [estimate_amplitude(m, A, phi, psi, epsilon=0.05, delta=0.05, seed=s).estimate for s in range(200)]
    )
    se = np.std(ests.real, ddof=1) / math.sqrt(ests.size)
    assert abs(ests.real.mean() - exact.real) <= 4 * se
    se_i = np.std(ests.imag, ddof=1) / math.sqrt(ests.size)
    assert abs(ests.imag.mean() - exact.imag) <= 4 * se_i
    covered = np.mean(np.abs(ests - exact) <= 0.05)
    assert covered >= 0.95


def test_unbiased_paired():
    A, _, psi, O = _inst(12)
    rho = np.outer(psi, psi.conj())
    m = exp_model(1.0, 1e-4)
    exact = pair_series_mean(m, A, rho, O)
    assert exact == pytest.approx(exact_expectation(m, A, rho, O), abs=1e-12)
    ests = np.array(
        [estimate_expectation(m, A, rho, O, epsilon=0.1, delta=0.1, seed=s).estimate for s in range(200)]
    )
    se = np.std(ests, ddof=1) / math.sqrt(ests.size)
    assert abs(ests.mean() - exact) <= 4 * se
    assert np.mean(np.abs(ests - exact) <= 0.1) >= 0.9


def test_constant_term_cross_stream():
    A, _, psi, O = _inst(13, D=4)
    rho = np.outer(psi, psi.conj())
    m = custom_model({1: 0.4, 3: -0.2}, constant=0.3)
    exact = exact_expectation(m, A, rho, O)
    assert pair_series_mean(m, A, rho, O) == pytest.approx(exact, abs=1e-12)
    ests = [estimate_expectation(m, A, rho, O, epsilon=0.05, delta=0.1, seed=s).estimate for s in range(40)]
    assert np.mean(np.abs(np.array(ests) - exact) <= 0.05) >= 0.9
    plan = plan_samples(2, 0.6, 1.0, epsilon=0.1, delta=0.1)
    with pytest.raises(PlanMismatch):
        estimate_expectation(m, A, rho, O, plan)


def test_recorded_samples_lie_in_range():
    A, phi, psi, O = _inst(14, D=4)
    m = monomial_model(6, 1e-2)
    rep = estimate_amplitude(m, A, phi, psi, epsilon=0.5, delta=0.2, seed=1, record_shots=True)
    rows = rep.extras["shots"]
    assert len(rows) == rep.shots_used
    assert {r[4] for r in rows} <= {1, -1}
    assert [r[1] for r in rows[: rep.shots_used // 2]] == ["real"] * (rep.shots_used // 2)
    per_sample = {rep.extras["one_norm"] * r[4] for r in rows}
    assert per_sample <= {m.one_norm, -m.one_norm}
    rho = np.outer(psi, psi.conj())
    rep2 = estimate_expectation(m, A, rho, O, epsilon=0.5, delta=0.2, seed=1, record_shots=True)
    omegas = set(np.round(np.linalg.eigvalsh(O), 9))
    for r in rep2.extras["shots"]:
        assert r[4] in (1, -1) and round(r[5], 9) in omegas
        assert abs(m.one_norm**2 * r[4] * r[5]) <= np.linalg.norm(O, 2) * m.one_norm**2 + 1e-12


def test_query_accounting():
    A, phi, psi, O = _inst(15)
    m = monomial_model(60, 1e-3)
    rep = estimate_amplitude(m, A, phi, psi, epsilon=0.05, delta=0.05, seed=4)
    assert sum(rep.degree_histogram.values()) == rep.shots_used
    assert rep.total_queries == sum(d * n for d, n in rep.degree_histogram.items())
    assert rep.avg_queries_per_run == pytest.approx(rep.total_queries / rep.shots_used)
    p = np.abs(m.first_coeffs) / m.one_norm
    e = float(np.sum(m.first_degrees * p))
    sd = math.sqrt(float(np.sum(m.first_degrees**2 * p)) - e * e)
    assert e == pytest.approx(expected_degree(m))
    assert abs(rep.avg_queries_per_run - e) <= 3 * sd / math.sqrt(rep.shots_used)
    rho = np.outer(psi, psi.conj())
    rep2 = estimate_expectation(m, A, rho, O, epsilon=0.1, delta=0.1, seed=4)
    assert sum(rep2.degree_histogram.values()) == rep2.shots_used
    assert abs(rep2.avg_queries_per_run - 2 * e) <= 3 * math.sqrt(2) * sd / math.sqrt(rep2.shots_used)


def test_argmax_invariance():
    A, phi, psi, _ = _inst(16)
    m = monomial_model(12, 1e-3)
    scaled = m.scaled(3.0)
    p1 = plan_samples(1, m.one_norm, epsilon=0.1, delta=0.1)
    p3 = plan_samples(1, scaled.one_norm, epsilon=0.3, delta=0.1)
    assert p1.S == p3.S
    r1 = estimate_amplitude(m, A, phi, psi, p1, seed=8)
    r3 = estimate_amplitude(scaled, A, phi, psi, p3, seed=8)
    assert r1.degree_histogram == r3.degree_histogram
    assert r3.estimate == pytest.approx(3 * r1.estimate, rel=1e-12)


def test_mean_mode_is_exact():
    A, phi, psi, _ = _inst(17)
    m = monomial_model(7, 1e-3)
    rep = estimate_amplitude(m, A, phi, psi, epsilon=0.05, delta=0.05, mode="mean", seed=1)
    # mean mode averages exact conditional means; only the degree draw is random
    assert abs(rep.estimate - exact_amplitude(m, A, phi, psi)) <= rep.radius


def test_circuit_backend_agrees():
    A, phi, psi, O = _inst(18, D=2)
    m = monomial_model(4, 1e-3)
    a = estimate_amplitude(m, A, phi, psi, epsilon=0.2, delta=0.1, seed=5)
    b = estimate_amplitude(m, A, phi, psi, epsilon=0.2, delta=0.1, seed=5, backend="circuit")
    assert a.estimate == pytest.approx(b.estimate, abs=1e-12)
    rho = np.outer(psi, psi.conj())
    a2 = estimate_expectation(m, A, rho, O, epsilon=0.3, delta=0.1, seed=5)
    b2 = estimate_expectation(m, A, rho, O, epsilon=0.3, delta=0.1, seed=5, backend="circuit")
    assert a2.estimate == pytest.approx(b2.estimate, abs=1e-12)


def test_worker_count_does_not_change_results():
    A, phi, psi, O = _inst(19)
    m = monomial_model(20, 1e-3)
    a = estimate_amplitude(m, A, phi, psi, epsilon=0.01, delta=0.05, seed=2, workers=1)
    b = estimate_amplitude(m, A, phi, psi, epsilon=0.01, delta=0.05, seed=2, workers=4)
    assert a.to_json() == b.to_json()
    rho = np.outer(psi, psi.conj())
    a2 = estimate_expectation(m, A, rho, O, epsilon=0.02, delta=0.05, seed=2, workers=1)
    b2 = estimate_expectation(m, A, rho, O, epsilon=0.02, delta=0.05, seed=2, workers=3)
    assert a2.to_json() == b2.to_json()


def test_noise_shifts_mean_by_damping():
    A, phi, psi, _ = _inst(20)
    m = monomial_model(10, 1e-3)
    p = 0.01
    noisy = series_mean(m, A, phi, psi, NoiseModel("depolarizing", p=p))
    d, c = m.first_degrees, m.first_coeffs
    T = [np.polynomial.chebyshev.chebval(A.eigenvalues, [0] * int(dd) + [1]) for dd in d]
    V = A.eigenvectors
    w = (V.conj().T @ phi).conj() * (V.conj().T @ psi)
    ref = sum(cc * (1 - p) ** int(dd) * np.sum(w * t) for dd, cc, t in zip(d, c, T))
    assert noisy == pytest.approx(ref, abs=1e-12)


# -------------------------------------------------------------- aggregate


def test_aggregate_examples():
    agg = aggregate(np.full(100, 2.5), 2.5, 0.05)
    assert agg.mean == 2.5
    assert agg.radius == pytest.approx(2.5 * math.sqrt(2 * math.log(80) / 100))
    with pytest.raises(EmptyStream):
        aggregate([], 1.0)
    rng = np.random.default_rng(0)
    x = rng.choice([-1.0, 1.0], 301)
    h1, h2 = x[:120], x[120:]
    pooled = aggregate(x, 1.0).mean
    halves = (120 * aggregate(h1, 1.0).mean + 181 * aggregate(h2, 1.0).mean) / 301
    assert pooled == pytest.approx(halves, abs=1e-15)


def test_monomial_histogram_concentrates_low():
    A, phi, psi, _ = _inst(21)
    m = monomial_model(200, 1e-2)
    plan = plan_samples(1, m.one_norm, epsilon=4 * math.sqrt(2 * math.log(40)), delta=0.1)
    rep = estimate_amplitude(m, A, phi, psi, plan, seed=0)
    depths = np.repeat(list(rep.degree_histogram), list(rep.degree_histogram.values()))
    agg = aggregate(np.ones(depths.size), 1.0, depths=depths)
    assert agg.histogram == rep.degree_histogram
    mode = max(rep.degree_histogram, key=rep.degree_histogram.get)
    assert mode < m.k / 2
    p = np.abs(m.first_coeffs) / m.one_norm
    e = float(np.sum(m.first_degrees * p))
    sd = math.sqrt(float(np.sum(m.first_degrees**2 * p)) - e * e)
    assert abs(depths.mean() - e) <= 3 * sd / math.sqrt(depths.size)


# ------------------------------------------------------------------- step


def test_step_at_reference_point_is_direct():
    A, _, psi, _ = _inst(22)
    m = step_model(0.1, 1e-2)
    exact = float(exact_amplitude(m, A, psi, psi).real)
    assert step_series_mean(m, A, psi, Y_STAR) == pytest.approx(exact, abs=1e-12)
    reps = [estimate_step_amplitude(m, A, psi, seed=s, epsilon=0.1, delta=0.1)[Y_STAR] for s in range(20)]
    assert np.mean([abs(r.estimate - exact) <= 0.05 for r in reps]) >= 0.9


def test_step_reweighting_identity_on_means():
    A, _, psi, _ = _inst(23)
    ref = step_model(0.1, 1e-2, Y_STAR, y_range=(-0.9, 0.9))
    for y in np.linspace(-0.9, 0.9, 13):
        direct = float(exact_amplitude(step_model_at(ref, y), A, psi, psi).real)
        assert step_series_mean(ref, A, psi, y) == pytest.approx(direct, abs=1e-10)


def test_step_two_level_filter():
    H = np.diag([-0.5, 0.5])
    ground = np.array([1.0, 0.0])
    m = step_model(0.1, 1e-2, Y_STAR, y_range=(-0.2, 0.2))
    out = estimate_step_amplitude(m, H, ground, epsilon=0.05, delta=0.05, seed=1, y_targets=[0.0, 0.1])
    for rep in out.values():
        assert abs(rep.estimate - 1.0) <= 0.05
        assert sum(rep.degree_histogram.values()) == rep.shots_used


def test_step_budget_check():
    A, _, psi, _ = _inst(24)
    with pytest.raises(EpsilonExhausted):
        estimate_step_amplitude(step_model(0.1, 1e-1), A, psi, epsilon=0.1, delta=0.1)
