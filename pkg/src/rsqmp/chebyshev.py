"""Truncated Chebyshev-series models of matrix functions.

A model is ``constant + sum_d a_d T_d(x) + sum_d b_d sqrt(1 - x^2) U_d(x)``.
Four builders are provided (monomial, exponential, inverse, step) together
with evaluation, the importance-sampling distribution over degrees, expected
query depth and the reweighting map used for eigenvalue thresholding.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Literal

import mpmath
import numpy as np
from scipy import special, stats

from .bessel import ive_range
from .errors import AllZeroCoefficients, DivisionByZeroCoefficient, NuTooLarge, ValidationError

GRID_POINTS = 10_000
PRUNE_RELATIVE = 1e-16
Y_STAR = 1.0 / math.sqrt(2.0)

Part = Literal["first", "second"]


@dataclass(frozen=True, eq=False)
class ChebyshevModel:
    """Constant plus first-kind and second-kind Chebyshev coefficient vectors.

    Attributes:
        tag: Function family ("monomial", "exp", "inverse", "step" or "custom").
        params: Builder parameters (t, beta, kappa, xi, y, ...).
        constant: Additive offset, never sampled.
        first_degrees: Degrees d of the T_d terms.
        first_coeffs: Coefficients a_d.
        second_degrees: Degrees d of the sqrt(1 - x^2) U_d terms.
        second_coeffs: Coefficients b_d.
        domain: Intervals on which the sup-error contract holds.
        nu: Target sup-error on the domain.
        k: Truncation index as defined by the builder.
        meta: Derived quantities (sigma, b, ...).
        exact_first: Optional high-precision copy of ``first_coeffs`` as
            mpmath numbers, used when double precision cannot resolve the
            cancellation in the series.
    """

    tag: str
    params: dict
    constant: float
    first_degrees: np.ndarray
    first_coeffs: np.ndarray
    second_degrees: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    second_coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    domain: tuple = ((-1.0, 1.0),)
    nu: float = 0.0
    k: int = 0
    meta: dict = field(default_factory=dict)
    exact_first: tuple | None = None
    exact_dps: int = 0

    @property
    def max_degree(self) -> int:
        degs = [int(d.max()) for d in (self.first_degrees, self.second_degrees) if d.size]
        return max(degs) if degs else 0

    @property
    def one_norm(self) -> float:
        """Sum of |a_d| over the first-kind part."""
        if self.exact_first is not None:
            with mpmath.workdps(self.exact_dps):
                return float(mpmath.fsum(abs(c) for c in self.exact_first))
        return float(np.sum(np.abs(self.first_coeffs)))

    @property
    def second_one_norm(self) -> float:
        return float(np.sum(np.abs(self.second_coeffs)))

    def exact_one_norm(self):
        """First-kind 1-norm as an mpmath number (exact models only)."""
        if self.exact_first is None:
            return mpmath.mpf(self.one_norm)
        with mpmath.workdps(self.exact_dps):
            return mpmath.fsum(abs(c) for c in self.exact_first)

    def scaled(self, factor: float) -> "ChebyshevModel":
        """Returns the model multiplied by a positive constant."""
        exact = None
        if self.exact_first is not None:
            with mpmath.workdps(self.exact_dps):
                exact = tuple(c * mpmath.mpf(factor) for c in self.exact_first)
        return ChebyshevModel(
            tag="custom",
            params={"base": self.tag, "factor": factor, **self.params},
            constant=self.constant * factor,
            first_degrees=self.first_degrees,
            first_coeffs=self.first_coeffs * factor,
            second_degrees=self.second_degrees,
            second_coeffs=self.second_coeffs * factor,
            domain=self.domain,
            nu=self.nu * abs(factor),
            k=self.k,
            meta=dict(self.meta),
            exact_first=exact,
            exact_dps=self.exact_dps,
        )

    def to_json(self) -> dict:
        return {
            "tag": self.tag,
            "params": _jsonable(self.params),
            "constant": self.constant,
            "first_kind": [[int(d), float(c)] for d, c in zip(self.first_degrees, self.first_coeffs)],
            "second_kind": [[int(d), float(c)] for d, c in zip(self.second_degrees, self.second_coeffs)],
            "domain": [list(map(float, iv)) for iv in self.domain],
            "nu": self.nu,
            "k": int(self.k),
            "max_degree": self.max_degree,
            "meta": _jsonable(self.meta),
            "norms": {"first": self.one_norm, "second": self.second_one_norm},
        }


def _jsonable(d: dict) -> dict:
    return json.loads(json.dumps(d, default=float))


def custom_model(
    first: dict[int, float] | None = None,
    second: dict[int, float] | None = None,
    constant: float = 0.0,
) -> ChebyshevModel:
    """Builds a model directly from degree -> coefficient maps."""
    first = first or {}
    second = second or {}
    fd = np.array(sorted(first), dtype=np.int64)
    sd = np.array(sorted(second), dtype=np.int64)
    if (fd.size and fd.min() < 0) or (sd.size and sd.min() < 0):
        raise ValidationError("degrees must be nonnegative")
    return ChebyshevModel(
        tag="custom",
        params={},
        constant=float(constant),
        first_degrees=fd,
        first_coeffs=np.array([float(first[d]) for d in fd]),
        second_degrees=sd,
        second_coeffs=np.array([float(second[d]) for d in sd]),
    )


# --------------------------------------------------------------------- builders


def monomial_model(t: int, nu: float) -> ChebyshevModel:
    """Truncated Chebyshev expansion of x^t.

    Args:
        t: Positive power.
        nu: Target sup-error in (0, 1).

    Returns:
        Model with same-sign coefficients 2^{1-t} C(t, (t-j)/2) at degrees
        j = t mod 2, ..., k; the j = 0 term is halved.
    """
    t = int(t)
    if t < 1:
        raise ValidationError("t must be a positive integer")
    if not 0 < nu < 1:
        raise ValidationError("nu must lie in (0, 1)")
    k = min(t, math.ceil(math.sqrt(2 * t * math.log(2 / nu))))
    degs = np.arange(t % 2, k + 1, 2, dtype=np.int64)
    denom = 2 ** (t - 1)
    coeffs = []
    for j in degs:
        num = math.comb(t, (t - int(j)) // 2)
        if j == 0:
            num = Fraction(num, 2)
        coeffs.append(float(Fraction(num) / denom))
    return ChebyshevModel(
        tag="monomial",
        params={"t": t},
        constant=0.0,
        first_degrees=degs,
        first_coeffs=np.array(coeffs),
        nu=float(nu),
        k=k,
        meta={"sign": "same"},
    )


def _exp_dps(beta: float, nu: float) -> int:
    # digits for values of size e^{beta/2} resolved to well below nu
    return 30 + math.ceil((beta / 2 + max(0.0, -math.log(nu))) / math.log(10))


def exp_model(beta: float, nu: float) -> ChebyshevModel:
    """Truncated Chebyshev series for e^{-beta x / 2} on [-1, 1].

    The coefficients are accumulated from the Taylor series of the exponential
    combined with the Chebyshev expansion of each monomial, in extended
    precision. Values of the function reach e^{beta/2}, so the model keeps the
    high-precision coefficients for evaluation.

    Args:
        beta: Positive inverse temperature.
        nu: Target sup-error, at most e^{beta/2} / 2.

    Raises:
        NuTooLarge: If nu exceeds e^{beta/2} / 2.
    """
    beta = float(beta)
    if not beta > 0:
        raise ValidationError("beta must be positive")
    if not nu > 0:
        raise ValidationError("nu must be positive")
    if nu > math.exp(beta / 2) / 2:
        raise NuTooLarge(f"nu={nu} exceeds e^(beta/2)/2 = {math.exp(beta / 2) / 2}")
    t = math.ceil(max(math.e**2 * beta / 2, beta / 2 + math.log(2 / nu)))
    k = min(t, math.ceil(math.sqrt(2 * t * (beta / 2 + math.log(4 / nu)))))
    dps = _exp_dps(beta, nu)
    with mpmath.workdps(dps):
        hb = mpmath.mpf(beta) / 2
        # w[l] = (-beta/2)^l / l! * 2^{1-l}
        w = [mpmath.mpf(2)]
        for l in range(1, t + 1):
            w.append(w[-1] * (-hb) / (2 * l))
        exact = []
        for j in range(k + 1):
            s = mpmath.fsum(w[l] * math.comb(l, (l - j) // 2) for l in range(j, t + 1, 2))
            exact.append(s / 2 if j == 0 else s)
        coeffs = np.array([float(c) for c in exact])
    return ChebyshevModel(
        tag="exp",
        params={"beta": beta},
        constant=0.0,
        first_degrees=np.arange(k + 1, dtype=np.int64),
        first_coeffs=coeffs,
        nu=float(nu),
        k=k,
        meta={"t": t, "sign": "alternating"},
        exact_first=tuple(exact),
        exact_dps=dps,
    )


def inverse_model(kappa: float, nu: float) -> ChebyshevModel:
    """Odd Chebyshev series for 1/x on [-1, -1/kappa] U [1/kappa, 1].

    a_{2j+1} = 4 (-1)^j P(X >= b + j + 1) with X ~ Binomial(2b, 1/2).

    Args:
        kappa: Condition number, greater than one.
        nu: Target sup-error on the two intervals.
    """
    kappa = float(kappa)
    if not kappa > 1:
        raise ValidationError("kappa must exceed 1")
    if not 0 < nu < 1:
        raise ValidationError("nu must lie in (0, 1)")
    b = math.ceil(kappa**2 * math.log(kappa / nu))
    k = min(b - 1, math.ceil(math.sqrt(b * math.log(4 * b / nu))))
    js = np.arange(k + 1)
    tail = stats.binom.sf(b + js, 2 * b, 0.5)
    coeffs = 4.0 * np.where(js % 2 == 0, 1.0, -1.0) * tail
    return ChebyshevModel(
        tag="inverse",
        params={"kappa": kappa},
        constant=0.0,
        first_degrees=(2 * js + 1).astype(np.int64),
        first_coeffs=coeffs,
        domain=((-1.0, -1.0 / kappa), (1.0 / kappa, 1.0)),
        nu=float(nu),
        k=k,
        meta={"b": b},
    )


def step_z(x, y: float) -> np.ndarray:
    """sin(arcsin y - arcsin x), the argument of the smoothed step."""
    x = np.clip(np.asarray(x, dtype=float), -1, 1)
    return y * np.sqrt(1 - x * x) - x * math.sqrt(max(0.0, 1 - y * y))


def step_margin(xi: float, y: float) -> float:
    """Smallest |z| at the band edges y - xi, y + xi that lie in [-1, 1]."""
    edges = [e for e in (y - xi, y + xi) if -1.0 <= e <= 1.0]
    if not edges:
        raise ValidationError("band covers the whole interval")
    return float(min(abs(step_z(e, y)) for e in edges))


def _step_domain(xi: float, y: float, margin: float) -> tuple:
    gamma = math.asin(y)
    a = math.asin(min(1.0, margin))
    out = []
    if y - xi >= -1:
        left = gamma - math.pi + a
        lo = math.sin(left) if left > -math.pi / 2 else -1.0
        if lo < y - xi:
            out.append((lo, y - xi))
    if y + xi <= 1:
        right = gamma + math.pi - a
        hi = math.sin(right) if right < math.pi / 2 else 1.0
        if hi > y + xi:
            out.append((y + xi, hi))
    return tuple(out)


def step_weights(sigma: float, jmax: int) -> np.ndarray:
    """Returns c g_j = sqrt(2 sigma / pi) e^{-sigma}(I_j + I_{j+1}) / (2j + 1), j = 0..jmax."""
    iv = ive_range(jmax + 1, sigma)
    j = np.arange(jmax + 1)
    return math.sqrt(2 * sigma / math.pi) * (iv[:-1] + iv[1:]) / (2 * j + 1)


def _step_coeffs(w: np.ndarray, y: float) -> tuple[np.ndarray, np.ndarray]:
    theta = math.acos(max(-1.0, min(1.0, y)))
    odd = 2 * np.arange(w.size) + 1
    return -w * np.sin(odd * theta), w * np.cos(odd * theta)


def step_model(
    xi: float,
    nu: float,
    y: float = Y_STAR,
    y_range: tuple[float, float] | None = None,
    max_grid_rounds: int = 60,
) -> ChebyshevModel:
    """Chebyshev model of theta(y - x) accurate outside (y - xi, y + xi).

    The model is the truncated series of 1/2 + erf(sqrt(2 sigma) z)/2 with
    z = sin(arcsin y - arcsin x). sigma is the smallest integer that puts the
    erf tail below nu/2 at the band edges; k is the smallest pair index whose
    coefficient tail is below nu/2, increased until the grid check passes.

    Args:
        xi: Half-width of the excluded band, in (0, 1).
        nu: Target sup-error.
        y: Step location in [-1, 1].
        y_range: If given, sigma is sized so the same (sigma, k) is valid for
            every y in this range (used when reweighting to other y).
        max_grid_rounds: Limit on grid-driven increases of k.

    Returns:
        Model with constant 1/2, T_{2j+1} coefficients a_j(y) and
        sqrt(1 - x^2) U_{2j} coefficients b_j(y).
    """
    if not 0 < xi < 1:
        raise ValidationError("xi must lie in (0, 1)")
    if not 0 < nu < 1:
        raise ValidationError("nu must lie in (0, 1)")
    if not -1 <= y <= 1:
        raise ValidationError("y must lie in [-1, 1]")
    margin = step_margin(xi, y)
    if y_range is not None:
        lo, hi = sorted(y_range)
        ys = np.unique(np.r_[np.linspace(lo, hi, 4001), y])
        margin = min(margin, min(step_margin(xi, float(v)) for v in ys)) * (1 - 1e-6)
    if margin <= 0:
        raise ValidationError("zero margin: the step cannot be resolved at this y")
    sigma = float(math.ceil(special.erfcinv(nu) ** 2 / (2 * margin**2)))
    jmax = int(math.ceil(12 * math.sqrt(sigma))) + 50
    w = step_weights(sigma, jmax)
    tail = np.cumsum(w[::-1])[::-1]  # tail[j] = sum_{i >= j} w_i
    below = np.nonzero(tail <= nu / 2)[0]
    k = int(below[0]) - 1 if below.size else jmax
    k = max(k, 0)
    domain = _step_domain(xi, y, step_margin(xi, y))
    model = None
    for _ in range(max_grid_rounds):
        a, bcoef = _step_coeffs(w[: k + 1], y)
        model = ChebyshevModel(
            tag="step",
            params={"xi": float(xi), "y": float(y)},
            constant=0.5,
            first_degrees=(2 * np.arange(k + 1) + 1).astype(np.int64),
            first_coeffs=a,
            second_degrees=(2 * np.arange(k + 1)).astype(np.int64),
            second_coeffs=bcoef,
            domain=domain,
            nu=float(nu),
            k=k,
            meta={
                "sigma": sigma,
                "margin": margin,
                "tail": float(tail[k + 1]) if k + 1 < tail.size else 0.0,
                "y_range": list(y_range) if y_range is not None else None,
            },
        )
        if grid_sup_error(model) <= nu:
            return model
        k = min(jmax, k + max(1, k // 20))
    raise ValidationError(f"step model failed its grid check after {max_grid_rounds} rounds")


# ------------------------------------------------------------------ evaluation


def target_function(model: ChebyshevModel) -> Callable[[np.ndarray], np.ndarray]:
    """Returns the function the model approximates, as a float callable."""
    p = model.params
    if model.tag == "monomial":
        return lambda x: np.asarray(x, dtype=float) ** p["t"]
    if model.tag == "exp":
        return lambda x: np.exp(-p["beta"] * np.asarray(x, dtype=float) / 2)
    if model.tag == "inverse":
        return lambda x: 1.0 / np.asarray(x, dtype=float)
    if model.tag == "step":
        return lambda x: np.where(np.asarray(x, dtype=float) < p["y"], 1.0, 0.0)
    raise ValidationError(f"no target function for tag {model.tag!r}")


def _dense(degrees: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    n = int(degrees.max()) + 1 if degrees.size else 1
    out = np.zeros(n)
    np.add.at(out, degrees, coeffs)
    return out


def clenshaw_t(c: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluates sum_d c_d T_d(x)."""
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for cd in c[:0:-1]:
        b1, b2 = cd + 2 * x * b1 - b2, b1
    return c[0] + x * b1 - b2


def clenshaw_u(c: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluates sum_d c_d U_d(x)."""
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for cd in c[::-1]:
        b1, b2 = cd + 2 * x * b1 - b2, b1
    return b1


def _needs_exact(model: ChebyshevModel) -> bool:
    if model.exact_first is None:
        return False
    roundoff = model.one_norm * (model.max_degree + 1) ** 2 * np.finfo(float).eps
    return roundoff > 1e-4 * model.nu


def _exact_values(model: ChebyshevModel, x: np.ndarray) -> list:
    """Evaluates the first-kind series in fixed-point integer arithmetic.

    Returns mpmath numbers at the model's working precision.
    """
    with mpmath.workdps(model.exact_dps):
        bits = int(model.exact_dps * 3.33) + 16
        scale = mpmath.mpf(2) ** bits
        dense = [0] * (model.max_degree + 1)
        for d, c in zip(model.first_degrees, model.exact_first):
            dense[int(d)] += int(mpmath.nint(c * scale))
        out = []
        for xv in np.asarray(x, dtype=float).reshape(-1):
            # float -> exact fixed point
            X = (Fraction(float(xv)) * (1 << bits)).__floor__()
            b1 = b2 = 0
            for cd in reversed(dense[1:]):
                b1, b2 = cd + ((2 * X * b1) >> bits) - b2, b1
            out.append(mpmath.mpf(dense[0] + ((X * b1) >> bits) - b2) / scale)
        return out


def evaluate(model: ChebyshevModel, x, exact: bool | None = None) -> np.ndarray | float:
    """Evaluates the model at points x in [-1, 1] with Clenshaw recurrences.

    Args:
        model: The series.
        x: Scalar or array of points.
        exact: Force (True) or forbid (False) the extended-precision path for
            models carrying exact coefficients. By default it is used when
            double-precision roundoff could approach the model's nu.

    Returns:
        Values of the same shape as x (float for scalar input).
    """
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 1 + 1e-12):
        raise ValidationError("evaluation points must lie in [-1, 1]")
    xa = np.clip(xa, -1.0, 1.0)
    flat = xa.reshape(-1)
    use_exact = _needs_exact(model) if exact is None else (exact and model.exact_first is not None)
    if use_exact:
        first = np.array([float(v) for v in _exact_values(model, flat)])
    elif model.first_degrees.size:
        first = clenshaw_t(_dense(model.first_degrees, model.first_coeffs), flat)
    else:
        first = np.zeros_like(flat)
    second = np.zeros_like(flat)
    if model.second_degrees.size:
        second = np.sqrt(1 - flat * flat) * clenshaw_u(
            _dense(model.second_degrees, model.second_coeffs), flat
        )
    out = (model.constant + first + second).reshape(xa.shape)
    return float(out) if np.ndim(x) == 0 else out


def evaluate_exact(model: ChebyshevModel, x) -> list:
    """Extended-precision values (mpmath) of a model carrying exact coefficients."""
    if model.exact_first is None:
        raise ValidationError("model has no exact coefficients")
    vals = _exact_values(model, np.asarray(x, dtype=float))
    with mpmath.workdps(model.exact_dps):
        return [v + model.constant for v in vals]


def domain_grid(model: ChebyshevModel, n: int = GRID_POINTS) -> np.ndarray:
    """Uniform grid of about n points spread over the model's domain intervals."""
    lengths = np.array([hi - lo for lo, hi in model.domain])
    counts = np.maximum(2, np.round(n * lengths / lengths.sum()).astype(int))
    return np.concatenate([np.linspace(lo, hi, c) for (lo, hi), c in zip(model.domain, counts)])


def grid_sup_error(model: ChebyshevModel, n: int = GRID_POINTS) -> float:
    """max |f(x) - model(x)| over a uniform grid of the model's domain."""
    x = domain_grid(model, n)
    if _needs_exact(model):
        vals = evaluate_exact(model, x)
        beta = model.params["beta"]
        with mpmath.workdps(model.exact_dps):
            hb = mpmath.mpf(beta) / 2
            return float(max(abs(v - mpmath.exp(-hb * mpmath.mpf(float(xv)))) for v, xv in zip(vals, x)))
    return float(np.max(np.abs(target_function(model)(x) - evaluate(model, x))))


# ------------------------------------------------------------- distributions


@dataclass(frozen=True)
class DegreeDistribution:
    """Importance-sampling law over degrees, one table per model part.

    Attributes:
        parts: part name -> (degrees, coefficients, probabilities) with
            probabilities |c_d| / (part 1-norm).
        part_weights: part name -> share of the total 1-norm.
        one_norms: part name -> 1-norm of the (pruned) part.
    """

    parts: dict
    part_weights: dict
    one_norms: dict

    def probs(self, part: Part = "first") -> np.ndarray:
        return self.parts[part][2]

    def degrees(self, part: Part = "first") -> np.ndarray:
        return self.parts[part][0]


def _part_table(degrees, coeffs, scale):
    keep = np.abs(coeffs) > PRUNE_RELATIVE * scale
    d, c = degrees[keep], coeffs[keep]
    norm = float(np.sum(np.abs(c)))
    return d, c, np.abs(c) / norm, norm


def degree_distribution(model: ChebyshevModel) -> DegreeDistribution:
    """p(d) = |c_d| / ||c||_1 for each nonzero part of the model.

    Raises:
        AllZeroCoefficients: If every coefficient is zero.
    """
    parts, norms = {}, {}
    for name, degs, coeffs in (
        ("first", model.first_degrees, model.first_coeffs),
        ("second", model.second_degrees, model.second_coeffs),
    ):
        scale = float(np.sum(np.abs(coeffs)))
        if degs.size == 0 or scale == 0:
            continue
        d, c, p, norm = _part_table(degs, coeffs, scale)
        parts[name] = (d, c, p)
        norms[name] = norm
    if not parts:
        raise AllZeroCoefficients("model has no nonzero coefficient")
    total = sum(norms.values())
    return DegreeDistribution(
        parts=parts,
        part_weights={k: v / total for k, v in norms.items()},
        one_norms=norms,
    )


def query_depths(part: Part, degrees: np.ndarray) -> np.ndarray:
    """Oracle queries per sample: d for T_d, d + 1 for sqrt(1 - x^2) U_d."""
    return degrees + (1 if part == "second" else 0)


def expected_degree(model: ChebyshevModel, part: Part | None = None, algorithm: int = 1) -> float:
    """Expected number of oracle queries per sample under p(d).

    Args:
        model: The series.
        part: Restrict to one part; by default parts are mixed by their
            1-norm shares.
        algorithm: 1 for single-degree runs, 2 for paired runs (j + l).
    """
    dist = degree_distribution(model)
    names = [part] if part is not None else list(dist.parts)
    total = 0.0
    for name in names:
        d, _, p = dist.parts[name]
        w = 1.0 if part is not None else dist.part_weights[name]
        total += w * float(np.sum(query_depths(name, d) * p))
    return total * (2 if algorithm == 2 else 1)


def reweight_step(model_at_ystar: ChebyshevModel, y: float) -> tuple[np.ndarray, np.ndarray]:
    """Weights turning samples of the y* step model into samples at y.

    With theta = arccos y, w^T_j = sin((2j+1) theta) / sin((2j+1) pi/4) and
    w^U_j = cos((2j+1) theta) / cos((2j+1) pi/4); both are bounded by sqrt 2.

    Returns:
        (w_T, w_U) aligned with the first-kind and second-kind degree arrays.

    Raises:
        DivisionByZeroCoefficient: If a reference coefficient vanishes.
    """
    if model_at_ystar.tag != "step" or abs(model_at_ystar.params["y"] - Y_STAR) > 1e-12:
        raise ValidationError("reweighting requires a step model built at y* = 1/sqrt(2)")
    if not -1 <= y <= 1:
        raise ValidationError("y must lie in [-1, 1]")
    theta = math.acos(y)
    out = []
    for degs, coeffs, fn, shift in (
        (model_at_ystar.first_degrees, model_at_ystar.first_coeffs, np.sin, 0),
        (model_at_ystar.second_degrees, model_at_ystar.second_coeffs, np.cos, 1),
    ):
        if np.any(coeffs == 0):
            raise DivisionByZeroCoefficient("reference coefficient is zero")
        odd = degs + shift  # 2j + 1 for both parts
        out.append(fn(odd * theta) / fn(odd * math.pi / 4))
    return out[0], out[1]


def step_model_at(model_at_ystar: ChebyshevModel, y: float) -> ChebyshevModel:
    """The y-model obtained by multiplying y* coefficients by the weights."""
    wT, wU = reweight_step(model_at_ystar, y)
    m = model_at_ystar
    return ChebyshevModel(
        tag="step",
        params={"xi": m.params["xi"], "y": float(y)},
        constant=m.constant,
        first_degrees=m.first_degrees,
        first_coeffs=m.first_coeffs * wT,
        second_degrees=m.second_degrees,
        second_coeffs=m.second_coeffs * wU,
        domain=_step_domain(m.params["xi"], y, m.meta["margin"]),
        nu=m.nu,
        k=m.k,
        meta=dict(m.meta),
    )


def model_from_json(obj: dict) -> ChebyshevModel:
    """Rebuilds a float-precision model from :meth:`ChebyshevModel.to_json`."""
    fk = np.array(obj.get("first_kind", []), dtype=float).reshape(-1, 2)
    sk = np.array(obj.get("second_kind", []), dtype=float).reshape(-1, 2)
    return ChebyshevModel(
        tag=obj["tag"],
        params=dict(obj.get("params", {})),
        constant=float(obj.get("constant", 0.0)),
        first_degrees=fk[:, 0].astype(np.int64),
        first_coeffs=fk[:, 1],
        second_degrees=sk[:, 0].astype(np.int64),
        second_coeffs=sk[:, 1],
        domain=tuple(tuple(iv) for iv in obj.get("domain", [[-1.0, 1.0]])),
        nu=float(obj.get("nu", 0.0)),
        k=int(obj.get("k", 0)),
        meta=dict(obj.get("meta", {})),
    )
