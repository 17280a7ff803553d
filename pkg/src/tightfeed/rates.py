"""Analytic contraction rates for EF and EF21 on F_{mu,L}: the per-step-size
rates on the extremal quadratics, the tuned optimal rate, and the dual
multipliers entering the contraction certificates.

Every rate is computed from the dominant root of the worst-case recurrence

    x_{k+2} = (1 - eta*c - sqrt(eps)(1 + eta*c)) x_{k+1} + sqrt(eps) x_k

which is unambiguous; the printed multiplier formulas are kept alongside and
are asserted against the root route by the test suite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .model import Compression, MethodId, ProblemClass, optimal_step_size


@dataclass(frozen=True)
class RateReport:
    """Tuned contraction factor plus all certificate coefficients.

    lambda_mult/nu_mult/a_coef are None in the exact-compression limit, where
    the rate degenerates to plain gradient descent and 1/sqrt(eps) diverges.
    b_coef is populated for EF21 only.
    """

    method: MethodId
    rho: float
    eta_used: float
    lambda_mult: float | None
    nu_mult: float | None
    a_coef: float | None
    b_coef: float | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "method": self.method.value,
                "rho": self.rho,
                "eta_used": self.eta_used,
                "lambda": self.lambda_mult,
                "nu": self.nu_mult,
                "a": self.a_coef,
                "b": self.b_coef,
            }
        )


def _multiplier_bracket(mu: float, L: float, rt: float) -> float:
    # shared radical term of both interpolation multipliers
    return (1.0 - rt) * (L - mu) + (1.0 + rt) * math.sqrt(
        (L - mu) ** 2 + 16.0 * L * mu * rt / (1.0 + rt) ** 2
    )


def ef_multiplier(pc: ProblemClass, comp: Compression) -> float:
    """Interpolation multiplier lambda of the EF certificate at the tuned step."""
    eta = optimal_step_size(pc, comp)
    return eta / (pc.L + pc.mu) * _multiplier_bracket(pc.mu, pc.L, comp.root)


def ef21_multiplier(pc: ProblemClass, comp: Compression) -> float:
    """Interpolation multiplier lambda' of the EF21 certificate; satisfies
    lambda' * eta^2 = lambda * sqrt(eps) at the tuned step."""
    eta = optimal_step_size(pc, comp)
    return comp.root / (eta * (pc.L + pc.mu)) * _multiplier_bracket(pc.mu, pc.L, comp.root)


def quadratic_rate_at(method: MethodId, curvature: float, comp: Compression, eta: float) -> float:
    """Squared modulus of the dominant root of r^2 - beta r - sqrt(eps) with
    beta = (1 - sqrt(eps)) - eta*c*(1 + sqrt(eps)): the exact asymptotic
    contraction of the method on f(x) = (c/2) x^2 under the saturating
    compressor.  At eps = 0 this collapses to the gradient-descent factor
    (1 - eta*c)^2."""
    if method not in (MethodId.EF, MethodId.EF21):
        raise ValueError(f"quadratic rate defined for EF/EF21, got {method}")
    if eta < 0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    rt = comp.root
    beta = (1.0 - rt) - eta * curvature * (1.0 + rt)
    disc = math.sqrt(beta * beta + 4.0 * rt)
    return ((abs(beta) + disc) / 2.0) ** 2


def worst_case_rate_over_class(method: MethodId, pc: ProblemClass, comp: Compression, eta: float) -> float:
    """Class lower bound at step size eta: the worse of the two extremal
    quadratics c = mu and c = L.  Its unique minimizer over eta is the tuned
    step size."""
    return max(
        quadratic_rate_at(method, pc.mu, comp, eta),
        quadratic_rate_at(method, pc.L, comp, eta),
    )


def ef_optimal_rate(pc: ProblemClass, comp: Compression) -> RateReport:
    """Exact tuned contraction factor of EF, with certificate coefficients."""
    eta = optimal_step_size(pc, comp)
    rho = quadratic_rate_at(MethodId.EF, pc.mu, comp, eta)
    if comp.epsilon == 0.0:
        return RateReport(MethodId.EF, rho, eta, None, None, None)
    rt = comp.root
    lam = ef_multiplier(pc, comp)
    a = (rho - rt) * (1.0 + rt) / rt
    return RateReport(MethodId.EF, rho, eta, lam, 1.0 / rt, a)


def ef21_optimal_rate(pc: ProblemClass, comp: Compression) -> RateReport:
    """Exact tuned contraction factor of EF21 (equal to EF's by construction),
    with its own certificate coefficients."""
    eta = optimal_step_size(pc, comp)
    rho = quadratic_rate_at(MethodId.EF21, pc.mu, comp, eta)
    if comp.epsilon == 0.0:
        return RateReport(MethodId.EF21, rho, eta, None, None, None)
    rt = comp.root
    lam = ef21_multiplier(pc, comp)
    b = lam / (pc.L - pc.mu) * (1.0 - rt) / (1.0 + rt)
    # prefactor of the completed square; the coefficient of lambda' here is the
    # one consistent with the square's cross terms (see certificates module)
    a = rho - comp.epsilon + lam * eta * eta * pc.L * pc.mu / (pc.L - pc.mu)
    return RateReport(MethodId.EF21, rho, eta, lam, 1.0, a, b)
