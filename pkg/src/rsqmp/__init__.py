"""Randomized Chebyshev-series estimation of matrix functions.

Classical simulator of single-element and paired Hadamard tests on a
qubitized block encoding, importance-sampled over Chebyshev degrees.
"""

__version__ = "0.1.0"

from .chebyshev import (  # noqa: E402
    ChebyshevModel,
    custom_model,
    evaluate,
    exp_model,
    expected_degree,
    grid_sup_error,
    inverse_model,
    monomial_model,
    step_model,
)
from .estimator import (  # noqa: E402
    EstimateReport,
    SamplePlan,
    aggregate,
    estimate_amplitude,
    estimate_expectation,
    estimate_step_amplitude,
    plan_samples,
)
from .hadamard import NoiseModel  # noqa: E402
from .operators import HermitianOperator, build_qubitized_oracle, new_hermitian, subnormalize  # noqa: E402

__all__ = [
    "ChebyshevModel",
    "EstimateReport",
    "HermitianOperator",
    "NoiseModel",
    "SamplePlan",
    "aggregate",
    "build_qubitized_oracle",
    "custom_model",
    "estimate_amplitude",
    "estimate_expectation",
    "estimate_step_amplitude",
    "evaluate",
    "exp_model",
    "expected_degree",
    "grid_sup_error",
    "inverse_model",
    "monomial_model",
    "new_hermitian",
    "plan_samples",
    "step_model",
    "subnormalize",
]
