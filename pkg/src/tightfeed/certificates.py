"""Machine verification of the contraction certificates: the weighted sum of
two interpolation inequalities and one compressor inequality must equal the
Lyapunov decrease plus a completed square, exactly at the coefficient level.

All checks are numeric on coefficient matrices of quadratic forms over the
free symbols of one step, so equality implies validity for every state in
every dimension (the forms are Kronecker-lifted elementwise).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import Compression, MethodId, ProblemClass, optimal_step_size
from .rates import ef21_optimal_rate, ef_optimal_rate

RESIDUAL_TOL = 1e-10
DECREASE_TOL = 1e-10

#: Free one-step symbols after substituting the update rules.
SYMBOLS = {
    MethodId.EF: ("x", "g", "e", "c"),
    MethodId.EF21: ("x", "g0", "g1", "d", "c"),
}


class CertificateError(ValueError):
    """Raised when a certificate identity or decrease check fails."""


@dataclass(frozen=True)
class Certificate:
    """Multipliers and completed-square data proving V_{k+1} <= rho V_k.

    square is the coefficient row of the linear form inside the completed
    square, over SYMBOLS[method]; the identity reads

        rho*V_k - V_{k+1} + lam*(I1 + I2) + nu*I_C = a * ||square . s||^2.
    """

    method: MethodId
    rho: float
    lam: float
    nu: float
    a: float
    b: float | None
    square: np.ndarray

    def __post_init__(self):
        if self.lam < 0 or self.nu < 0 or not self.a > 0:
            raise CertificateError(
                f"need lam >= 0, nu >= 0, a > 0; got {self.lam}, {self.nu}, {self.a}"
            )

    def to_json(self, residual: float | None = None) -> str:
        return json.dumps(
            {
                "method": self.method.value,
                "rho": self.rho,
                "lambda": self.lam,
                "nu": self.nu,
                "a": self.a,
                "b": self.b,
                "square": [float(v) for v in self.square],
                "symbols": list(SYMBOLS[self.method]),
                "residual": residual,
            }
        )


def _sym(M):
    return 0.5 * (M + M.T)


def _ef_forms(pc: ProblemClass, comp: Compression, eta: float):
    """Coefficient matrices over (x, g, e, c) for EF: Lyapunov at both steps,
    the two fixed-point interpolation inequalities, and the compressor bound."""
    mu, L, rt = pc.mu, pc.L, comp.root
    kq = mu / (2.0 * (1.0 - mu / L))
    x, g, e, c = np.eye(4)
    P = np.array([[1.0, -1.0], [-1.0, 1.0 + 1.0 / rt]])
    rows0 = np.array([x, e])
    rows1 = np.array([x - c, e + eta * g - c])
    V0 = rows0.T @ P @ rows0
    V1 = rows1.T @ P @ rows1
    w = x - g / L
    I1 = _sym(-np.outer(g, x)) + np.outer(g, g) / (2.0 * L) + kq * np.outer(w, w)
    I2 = np.outer(g, g) / (2.0 * L) + kq * np.outer(w, w)
    u = e + eta * g
    IC = np.outer(u - c, u - c) - comp.epsilon * np.outer(u, u)
    return V0, V1, I1, I2, IC


def _ef21_forms(pc: ProblemClass, comp: Compression, eta: float):
    """Coefficient matrices over (x, g0, g1, d, c) for EF21: the interpolation
    pair links the consecutive iterates x_k and x_{k+1} = x_k - eta*d."""
    mu, L, rt = pc.mu, pc.L, comp.root
    kq = mu / (2.0 * (1.0 - mu / L))
    x, g0, g1, d, c = np.eye(5)
    P = np.array([[1.0 + rt, -1.0], [-1.0, 1.0]])
    rows0 = np.array([g0, d])
    rows1 = np.array([g1, d + c])
    V0 = rows0.T @ P @ rows0
    V1 = rows1.T @ P @ rows1
    dx = -eta * d  # x_{k+1} - x_k
    w = -dx - (g0 - g1) / L
    I1 = _sym(np.outer(g0, dx)) + np.outer(g1 - g0, g1 - g0) / (2.0 * L) + kq * np.outer(w, w)
    I2 = _sym(-np.outer(g1, dx)) + np.outer(g0 - g1, g0 - g1) / (2.0 * L) + kq * np.outer(w, w)
    u = g1 - d
    IC = np.outer(u - c, u - c) - comp.epsilon * np.outer(u, u)
    return V0, V1, I1, I2, IC


def _forms(method: MethodId, pc: ProblemClass, comp: Compression, eta: float):
    if method == MethodId.EF:
        return _ef_forms(pc, comp, eta)
    if method == MethodId.EF21:
        return _ef21_forms(pc, comp, eta)
    raise ValueError(f"certificates exist for EF/EF21, got {method}")


def build_certificate(method: MethodId, pc: ProblemClass, comp: Compression) -> Certificate:
    """Assemble the certificate at the tuned step size: closed-form multipliers,
    then the completed square re-derived numerically from the slack matrix
    (rather than trusting printed inner coefficients)."""
    if comp.epsilon == 0.0:
        raise CertificateError("certificate undefined at eps = 0 (exact-gradient case)")
    eta = optimal_step_size(pc, comp)
    report = ef_optimal_rate(pc, comp) if method == MethodId.EF else ef21_optimal_rate(pc, comp)
    rho, lam, nu = report.rho, report.lambda_mult, report.nu_mult
    V0, V1, I1, I2, IC = _forms(method, pc, comp, eta)
    delta = rho * V0 - V1 + lam * (I1 + I2) + nu * IC
    w, U = np.linalg.eigh(_sym(delta))
    a = float(w[-1])
    if a <= 0 or max(abs(w[0]), abs(w[-2])) > RESIDUAL_TOL * max(1.0, a):
        raise CertificateError(
            f"certificate slack is not a positive rank-1 form: eigenvalues {w}"
        )
    vec = U[:, -1]
    # normalize the square on its auxiliary-state coordinate (e resp. d)
    idx = SYMBOLS[method].index("e" if method == MethodId.EF else "d")
    if abs(vec[idx]) > 1e-8:
        a *= vec[idx] ** 2
        vec = vec / vec[idx]
    if not rho > comp.root:
        raise CertificateError(f"rho = {rho} must exceed sqrt(eps) = {comp.root}")
    return Certificate(method, rho, lam, nu, a, report.b_coef, vec)


def certificate_residual(cert: Certificate, pc: ProblemClass, comp: Compression) -> float:
    """Max absolute coefficient gap between the multiplier combination and the
    decrease-plus-square side of the identity.  Exact certificates stay below
    RESIDUAL_TOL; perturbing any multiplier is immediately visible."""
    eta = optimal_step_size(pc, comp)
    V0, V1, I1, I2, IC = _forms(cert.method, pc, comp, eta)
    combo = cert.lam * (I1 + I2) + cert.nu * IC
    target = V1 - cert.rho * V0 + cert.a * np.outer(cert.square, cert.square)
    return float(np.max(np.abs(combo - target)))


def validate_certificate(cert: Certificate, pc: ProblemClass, comp: Compression) -> float:
    """Return the residual, raising CertificateError when it exceeds tolerance."""
    res = certificate_residual(cert, pc, comp)
    if res > RESIDUAL_TOL:
        eta = optimal_step_size(pc, comp)
        V0, V1, I1, I2, IC = _forms(cert.method, pc, comp, eta)
        diff = cert.lam * (I1 + I2) + cert.nu * IC - (
            V1 - cert.rho * V0 + cert.a * np.outer(cert.square, cert.square)
        )
        i, j = np.unravel_index(np.argmax(np.abs(diff)), diff.shape)
        names = SYMBOLS[cert.method]
        raise CertificateError(
            f"certificate identity fails: coefficient ({names[i]}, {names[j]}) "
            f"differs by {diff[i, j]:.3e} (residual {res:.3e} > {RESIDUAL_TOL})"
        )
    return res


def verify_decrease_on_samples(
    cert: Certificate,
    pc: ProblemClass,
    comp: Compression,
    n_samples: int = 10_000,
    seed: int = 0,
) -> float:
    """Monte-Carlo pointwise check of V_{k+1} <= rho V_k on random scalar states,
    random admissible compressor outputs, and random quadratics f_c, c in [mu, L].

    Returns the maximum observed V_{k+1} - rho V_k; a value above DECREASE_TOL
    raises with the offending sample.
    """
    rng = np.random.default_rng(seed)
    eta = optimal_step_size(pc, comp)
    rt = comp.root
    worst = -np.inf
    worst_sample = None
    for _ in range(n_samples):
        c_curv = rng.uniform(pc.mu, pc.L)
        if cert.method == MethodId.EF:
            x, e = rng.normal(size=2)
            g = c_curv * x
            u = e + eta * g
            msg = u - rng.uniform(-1.0, 1.0) * rt * u
            x1, e1 = x - msg, u - msg
            P = np.array([[1.0, -1.0], [-1.0, 1.0 + 1.0 / rt]])
            v0 = np.array([x, e]) @ P @ np.array([x, e])
            v1 = np.array([x1, e1]) @ P @ np.array([x1, e1])
            sample = {"x": x, "e": e, "c": msg, "curvature": c_curv}
        else:
            x, d = rng.normal(size=2)
            g = c_curv * x
            x1 = x - eta * d
            g1 = c_curv * x1
            u = g1 - d
            msg = u - rng.uniform(-1.0, 1.0) * rt * u
            d1 = d + msg
            P = np.array([[1.0 + rt, -1.0], [-1.0, 1.0]])
            v0 = np.array([g, d]) @ P @ np.array([g, d])
            v1 = np.array([g1, d1]) @ P @ np.array([g1, d1])
            sample = {"x": x, "d": d, "c": msg, "curvature": c_curv}
        gap = v1 - cert.rho * v0
        if gap > worst:
            worst, worst_sample = gap, sample
    if worst > DECREASE_TOL:
        raise CertificateError(f"decrease violated by {worst:.3e} at sample {worst_sample}")
    return float(worst)
