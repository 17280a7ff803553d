"""tightfeed: exact worst-case contraction rates for compressed gradient
descent and error-feedback methods on smooth strongly convex functions,
with semidefinite Lyapunov search and machine-checked certificates."""

from .model import (
    Compression,
    LyapunovCandidate,
    MethodConfig,
    MethodId,
    ProblemClass,
    StateVector,
    ef21_closed_form_lyapunov,
    ef_closed_form_lyapunov,
    evaluate_lyapunov,
    optimal_step_size,
)
from .rates import (
    RateReport,
    ef21_optimal_rate,
    ef_optimal_rate,
    quadratic_rate_at,
    worst_case_rate_over_class,
)
from .certificates import (
    Certificate,
    CertificateError,
    build_certificate,
    certificate_residual,
    validate_certificate,
    verify_decrease_on_samples,
)
from .simulate import (
    Compressor,
    QuadraticOracle,
    Trajectory,
    empirical_contraction,
    identity_compressor,
    initial_state,
    scaling_compressor,
    simulate,
    step,
    top1_compressor,
    worst_case_trajectory,
)

__version__ = "0.1.0"

__all__ = [
    "Compression",
    "LyapunovCandidate",
    "MethodConfig",
    "MethodId",
    "ProblemClass",
    "StateVector",
    "ef21_closed_form_lyapunov",
    "ef_closed_form_lyapunov",
    "evaluate_lyapunov",
    "optimal_step_size",
    "RateReport",
    "ef21_optimal_rate",
    "ef_optimal_rate",
    "quadratic_rate_at",
    "worst_case_rate_over_class",
    "Certificate",
    "CertificateError",
    "build_certificate",
    "certificate_residual",
    "validate_certificate",
    "verify_decrease_on_samples",
    "Compressor",
    "QuadraticOracle",
    "Trajectory",
    "empirical_contraction",
    "identity_compressor",
    "initial_state",
    "scaling_compressor",
    "simulate",
    "step",
    "top1_compressor",
    "worst_case_trajectory",
]
