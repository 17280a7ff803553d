import json
import math

import numpy as np
import pytest

from tightfeed import (
    Compression,
    MethodId,
    ProblemClass,
    ef21_optimal_rate,
    ef_optimal_rate,
    optimal_step_size,
    quadratic_rate_at,
    worst_case_rate_over_class,
)


def rate_oracle(c, eps, eta):
    """Squared dominant-root modulus via numpy's polynomial solver."""
    rt = math.sqrt(eps)
    beta = 1 - eta * c - rt * (1 + eta * c)
    roots = np.roots([1.0, -beta, -rt])
    return float(np.max(np.abs(roots)) ** 2)


def printed_rate(mu, L, eps):
    """The tuned-rate formula as printed, written out independently."""
    rt = math.sqrt(eps)
    eta = (2 / (L + mu)) * (1 - rt) / (1 + rt)
    lam = (eta / (L + mu)) * (
        (1 - rt) * (L - mu) + (1 + rt) * math.sqrt((L - mu) ** 2 + 16 * L * mu * rt / (1 + rt) ** 2)
    )
    return rt + 0.25 * (1 + rt) * (L - mu) * lam


def test_gd_limit():
    pc = ProblemClass(0.5, 1.0)
    rep = ef_optimal_rate(pc, Compression(0.0))
    assert rep.rho == pytest.approx(((pc.L - pc.mu) / (pc.L + pc.mu)) ** 2, abs=1e-15)
    assert rep.lambda_mult is None and rep.nu_mult is None and rep.a_coef is None
    rep21 = ef21_optimal_rate(pc, Compression(0.0))
    assert rep21.rho == rep.rho


def test_reference_point():
    pc = ProblemClass(0.5, 1.0)
    comp = Compression(0.25)
    rep = ef_optimal_rate(pc, comp)
    assert rep.eta_used == pytest.approx(4.0 / 9.0, abs=1e-15)
    assert rep.rho == pytest.approx(rate_oracle(0.5, 0.25, 4.0 / 9.0), abs=1e-14)
    assert rep.rho == pytest.approx(0.63256, abs=5e-6)
    assert rep.nu_mult == pytest.approx(2.0)
    assert ef21_optimal_rate(pc, comp).nu_mult == 1.0


def test_rate_matches_printed_formula():
    rng = np.random.default_rng(3)
    for _ in range(25):
        mu = rng.uniform(0.01, 0.9)
        L = mu + rng.uniform(0.05, 3.0)
        eps = rng.uniform(1e-4, 0.99)
        rep = ef_optimal_rate(ProblemClass(mu, L), Compression(eps))
        assert abs(rep.rho - printed_rate(mu, L, eps)) < 1e-12


def test_rate_matches_root_oracle_at_tuned_step():
    rng = np.random.default_rng(4)
    for _ in range(25):
        mu = rng.uniform(0.01, 0.9)
        L = mu + rng.uniform(0.05, 3.0)
        eps = rng.uniform(1e-4, 0.99)
        pc, comp = ProblemClass(mu, L), Compression(eps)
        eta = optimal_step_size(pc, comp)
        assert abs(ef_optimal_rate(pc, comp).rho - rate_oracle(mu, eps, eta)) < 1e-12


def test_ef_equals_ef21_exactly():
    rng = np.random.default_rng(5)
    for _ in range(20):
        mu = rng.uniform(0.01, 0.9)
        L = mu + rng.uniform(0.05, 3.0)
        eps = rng.uniform(0.0, 0.99)
        pc, comp = ProblemClass(mu, L), Compression(eps)
        assert ef_optimal_rate(pc, comp).rho == ef21_optimal_rate(pc, comp).rho


def test_multiplier_consistency():
    # lambda' * eta^2 == lambda * sqrt(eps)
    rng = np.random.default_rng(6)
    for _ in range(20):
        mu = rng.uniform(0.01, 0.9)
        L = mu + rng.uniform(0.05, 3.0)
        eps = rng.uniform(1e-4, 0.99)
        pc, comp = ProblemClass(mu, L), Compression(eps)
        eta = optimal_step_size(pc, comp)
        lam = ef_optimal_rate(pc, comp).lambda_mult
        lamp = ef21_optimal_rate(pc, comp).lambda_mult
        assert lamp * eta * eta == pytest.approx(lam * math.sqrt(eps), rel=1e-12)


def test_rho_exceeds_sqrt_eps_and_monotone():
    L = 1.0
    for mu in (0.1, 0.25, 0.5):
        rhos = []
        for eps in np.linspace(0.01, 0.95, 12):
            rho = ef_optimal_rate(ProblemClass(mu, L), Compression(eps)).rho
            assert rho > math.sqrt(eps)
            rhos.append(rho)
        assert all(a < b for a, b in zip(rhos, rhos[1:]))  # increasing in eps
    for eps in (0.25, 0.5):
        by_kappa = [
            ef_optimal_rate(ProblemClass(1.0 / k, 1.0), Compression(eps)).rho
            for k in (1.5, 2, 4, 10, 50)
        ]
        assert all(a < b for a, b in zip(by_kappa, by_kappa[1:]))  # increasing in kappa
    assert ef_optimal_rate(ProblemClass(0.5, 1.0), Compression(1 - 1e-10)).rho > 1 - 1e-4


def test_quadratic_rate_examples():
    comp = Compression(0.25)
    assert quadratic_rate_at(MethodId.EF, 0.5, comp, 4.0 / 9.0) == pytest.approx(
        rate_oracle(0.5, 0.25, 4.0 / 9.0), abs=1e-14
    )
    assert quadratic_rate_at(MethodId.EF, 0.5, comp, 0.0) == 1.0
    pc = ProblemClass(0.5, 1.0)
    eta = optimal_step_size(pc, comp)
    assert quadratic_rate_at(MethodId.EF, pc.mu, comp, eta) == pytest.approx(
        quadratic_rate_at(MethodId.EF, pc.L, comp, eta), abs=1e-14
    )
    with pytest.raises(ValueError):
        quadratic_rate_at(MethodId.CGD, 0.5, comp, 0.1)


def test_worst_case_over_class_minimized_at_tuned_step():
    pc = ProblemClass(0.5, 1.0)
    comp = Compression(0.25)
    eta = optimal_step_size(pc, comp)
    at_opt = worst_case_rate_over_class(MethodId.EF, pc, comp, eta)
    assert at_opt == pytest.approx(ef_optimal_rate(pc, comp).rho, abs=1e-14)
    assert worst_case_rate_over_class(MethodId.EF, pc, comp, eta * 1.01) > at_opt
    assert worst_case_rate_over_class(MethodId.EF, pc, comp, eta * 0.99) > at_opt


def test_golden_section_argmin_matches_tuned_step():
    phi = (math.sqrt(5) - 1) / 2
    for mu, L, eps in [(0.5, 1.0, 0.25), (0.1, 1.0, 0.5), (0.2, 2.0, 0.8)]:
        pc, comp = ProblemClass(mu, L), Compression(eps)
        f = lambda eta: worst_case_rate_over_class(MethodId.EF, pc, comp, eta)
        lo, hi = 1e-12, 2.0 / (L + mu)
        c, d = hi - phi * (hi - lo), lo + phi * (hi - lo)
        while hi - lo > 1e-12:
            if f(c) < f(d):
                hi, d = d, c
                c = hi - phi * (hi - lo)
            else:
                lo, c = c, d
                d = lo + phi * (hi - lo)
        assert 0.5 * (lo + hi) == pytest.approx(optimal_step_size(pc, comp), abs=1e-9)


def test_unstable_eta_returned_not_raised():
    pc = ProblemClass(0.1, 1.0)
    comp = Compression(0.9)
    rho = worst_case_rate_over_class(MethodId.EF, pc, comp, 1.8)
    assert rho > 1.0 and math.isfinite(rho)


def test_report_serializes_multipliers():
    rep = ef21_optimal_rate(ProblemClass(0.5, 1.0), Compression(0.25))
    data = json.loads(rep.to_json())
    assert set(data) == {"method", "rho", "eta_used", "lambda", "nu", "a", "b"}
    assert data["nu"] == 1.0 and data["b"] is not None
