"""Classical resource estimates: truncation degree, expected degree, sample counts.

The step-function estimate works directly on e^{-sigma} I_j(sigma) in chunks,
so it reaches sigma ~ 1e13 without building a dense model.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from . import bessel
from .chebyshev import (
    Y_STAR,
    exp_model,
    expected_degree,
    inverse_model,
    monomial_model,
    step_margin,
)
from .errors import ValidationError

FEMOCO = {
    "xi": 0.001 / 1547,
    "eta_sq": 1e-7,
    "toffoli_per_query": 1.8e4,
    "published": {
        "k": 1.12e7,
        "expected_degree": 4.01e5,
        "one_norm_sq": 2.35,
        "qpe_calls": 2.43e6,
        "toffoli_qpe": 4.4e10,
        "toffoli_full_qsp": 2.0e11,
        "toffoli_randomized": 7.3e9,
    },
}

_CHUNK = 2_000_000


def sample_count(P: int, one_norm: float, epsilon: float, delta: float, obs_norm: float = 1.0) -> int:
    """Hoeffding sample count for Alg. 1 (P = 1) or Alg. 2 (P = 2)."""
    if P == 1:
        return math.ceil(16 * one_norm**2 / epsilon**2 * math.log(4 / delta))
    if P == 2:
        return math.ceil(8 * obs_norm**2 * one_norm**4 / epsilon**2 * math.log(2 / delta))
    raise ValidationError("P must be 1 or 2")


def _step_scalars(sigma: float, nu: float, y: float, scaled: bool) -> dict:
    jmax = int(math.ceil(12 * math.sqrt(sigma))) + 50
    weights = []
    for start in range(0, jmax + 1, _CHUNK):
        j = np.arange(start, min(jmax + 1, start + _CHUNK) + 1)
        if scaled:
            iv = bessel.ive(j, sigma)
            pref = math.sqrt(2 * sigma / math.pi)
        else:
            iv = bessel.iv(j, sigma)
            pref = math.sqrt(2 * sigma / math.pi) * math.exp(-sigma)
        weights.append(pref * (iv[:-1] + iv[1:]) / (2 * j[:-1] + 1))
    w = np.concatenate(weights)
    tail = np.cumsum(w[::-1])[::-1]
    below = np.nonzero(tail <= nu / 2)[0]
    k = max(0, int(below[0]) - 1) if below.size else jmax
    wk = w[: k + 1]
    odd = 2 * np.arange(k + 1) + 1
    theta = math.acos(y)
    a = np.abs(wk * np.sin(odd * theta))
    b = np.abs(wk * np.cos(odd * theta))
    norm_a, norm_b = float(a.sum()), float(b.sum())
    e_first = float((odd * a).sum() / norm_a) if norm_a > 0 else 0.0
    e_second = float((odd * b).sum() / norm_b) if norm_b > 0 else 0.0
    total = norm_a + norm_b
    return {
        "k": k,
        "max_degree": 2 * k + 1,
        "one_norm": norm_a,
        "second_one_norm": norm_b,
        "expected_degree": (norm_a * e_first + norm_b * e_second) / total,
        "expected_degree_first": e_first,
        "expected_degree_second": e_second,
        "tail": float(tail[k + 1]) if k + 1 < tail.size else 0.0,
    }


def resource_estimate(
    tag: str,
    params: dict,
    nu: float,
    epsilon: float | None = None,
    delta: float | None = None,
    toffoli_per_query: float | None = None,
    scaled: bool = True,
) -> dict:
    """Classical-only cost report for one Chebyshev model.

    Args:
        tag: "monomial" (params t), "exp" (beta), "inverse" (kappa) or
            "step" (xi, optional y).
        params: Builder parameters.
        nu: Target approximation error.
        epsilon: Optional target additive error for sample counts.
        delta: Optional failure probability for sample counts.
        toffoli_per_query: Optional Toffoli cost of one oracle query.
        scaled: Use e^{-sigma} I_j(sigma) for the step model. Turning this
            off reproduces the underflow of the naive evaluation.

    Returns:
        Dict with k, max_degree, expected_degree, one_norm, ratio k / E[j],
        and sample and Toffoli counts when requested.

    Raises:
        NumericalUnderflow: For the step model at large sigma when ``scaled``
            is False.
    """
    if tag == "monomial":
        m = monomial_model(int(params["t"]), nu)
    elif tag == "exp":
        m = exp_model(float(params["beta"]), nu)
    elif tag == "inverse":
        m = inverse_model(float(params["kappa"]), nu)
    elif tag == "step":
        m = None
    else:
        raise ValidationError(f"unknown function tag {tag!r}")
    if m is not None:
        rep = {
            "k": int(m.k),
            "max_degree": m.max_degree,
            "one_norm": m.one_norm,
            "expected_degree": expected_degree(m),
            "meta": {kk: v for kk, v in m.meta.items() if isinstance(v, (int, float, str))},
        }
    else:
        xi = float(params["xi"])
        y = float(params.get("y", Y_STAR))
        margin = step_margin(xi, y)
        sigma = float(math.ceil(special.erfcinv(nu) ** 2 / (2 * margin**2)))
        rep = _step_scalars(sigma, nu, y, scaled)
        rep["meta"] = {"sigma": sigma, "margin": margin}
    rep.update({"tag": tag, "params": dict(params), "nu": nu})
    rep["ratio_k_over_expected"] = rep["k"] / rep["expected_degree"]
    if epsilon is not None and delta is not None:
        rep["samples_alg1"] = sample_count(1, rep["one_norm"], epsilon, delta)
        rep["expected_queries_alg1"] = rep["samples_alg1"] * 2 * rep["expected_degree"]
    if toffoli_per_query is not None:
        rep["toffoli_full_qsp"] = rep["k"] * toffoli_per_query
        rep["toffoli_randomized"] = rep["expected_degree"] * toffoli_per_query
    return rep


def femoco_report(nu_rule: str = "eta_sq/4", scaled: bool = True) -> dict:
    """Ground-state-energy resource comparison at the FeMoco configuration.

    The threshold filter must resolve a jump of eta^2 in F(y); the
    approximation error is set to eta^2 / 4 by default ("eta/4" is accepted
    for comparison).

    Returns:
        Dict with "computed", "published" and "comparison" sections.
    """
    cfg = FEMOCO
    xi, eta_sq = cfg["xi"], cfg["eta_sq"]
    if nu_rule == "eta_sq/4":
        nu = eta_sq / 4
    elif nu_rule == "eta/4":
        nu = math.sqrt(eta_sq) / 4
    else:
        raise ValidationError(f"unknown nu rule {nu_rule!r}")
    tpq = cfg["toffoli_per_query"]
    est = resource_estimate("step", {"xi": xi, "y": Y_STAR}, nu, toffoli_per_query=tpq, scaled=scaled)
    qpe_calls = math.ceil(math.pi / (2 * xi))
    computed = {
        "xi": xi,
        "eta_sq": eta_sq,
        "nu": nu,
        "nu_rule": nu_rule,
        "sigma": est["meta"]["sigma"],
        "k": est["k"],
        "max_degree": est["max_degree"],
        "expected_degree": est["expected_degree"],
        "one_norm": est["one_norm"],
        "one_norm_sq": est["one_norm"] ** 2,
        "ratio_k_over_expected": est["ratio_k_over_expected"],
        "qpe_calls": qpe_calls,
        "toffoli_qpe": qpe_calls * tpq,
        "toffoli_full_qsp": est["k"] * tpq,
        "toffoli_randomized": est["expected_degree"] * tpq,
    }
    published = dict(cfg["published"])
    comparison = {
        key: {
            "computed": computed[key],
            "published": published[key],
            "log10_ratio": math.log10(computed[key] / published[key]),
        }
        for key in published
    }
    return {"computed": computed, "published": published, "comparison": comparison}
