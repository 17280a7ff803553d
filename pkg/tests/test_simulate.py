import numpy as np
import pytest

from tightfeed import (
    Compression,
    MethodConfig,
    MethodId,
    ProblemClass,
    QuadraticOracle,
    ef21_closed_form_lyapunov,
    ef_closed_form_lyapunov,
    empirical_contraction,
    identity_compressor,
    initial_state,
    scaling_compressor,
    simulate,
    step,
    top1_compressor,
    worst_case_trajectory,
)
from tightfeed.model import LyapunovCandidate


def dominant_root(mu_or_c, eps, eta):
    """Independent oracle: dominant root of r^2 - beta r - sqrt(eps)."""
    rt = np.sqrt(eps)
    beta = 1 - eta * mu_or_c - rt * (1 + eta * mu_or_c)
    roots = np.roots([1.0, -beta, -rt])
    return roots[np.argmax(np.abs(roots))]


def test_scaling_compressor_contract_exact():
    comp = Compression(0.25)
    rng = np.random.default_rng(1)
    for theta in (-1.0, -0.3, 0.0, 0.7, 1.0):
        c = scaling_compressor(comp, theta, debug=True)
        v = rng.normal(size=5)
        out = c(v)
        lhs = np.dot(v - out, v - out)
        assert lhs == pytest.approx(theta**2 * 0.25 * np.dot(v, v), rel=1e-12)
    with pytest.raises(ValueError):
        scaling_compressor(comp, 1.5)


def test_top1_contract_check():
    v = np.array([3.0, 1.0, 1.0])
    ok = top1_compressor(Compression(0.9), debug=True)
    np.testing.assert_allclose(ok(v), [3.0, 0.0, 0.0])
    bad = top1_compressor(Compression(0.1), debug=True)
    with pytest.raises(AssertionError):
        bad(v)


def test_ef_hand_step():
    pc = ProblemClass(0.5, 1.0)
    comp = Compression(0.25)
    cfg = MethodConfig(MethodId.EF, pc, comp, 4.0 / 9.0)
    oracle = QuadraticOracle(0.5)
    compressor = scaling_compressor(comp, 1.0, debug=True)
    s0 = initial_state(cfg, oracle, compressor, x0=1.0)
    s1 = step(cfg, oracle, compressor, s0)
    assert s1["x"][0] == pytest.approx(2.0 / 3.0, abs=1e-15)


def test_ef21_hand_step():
    pc = ProblemClass(0.5, 1.0)
    comp = Compression(0.25)
    cfg = MethodConfig(MethodId.EF21, pc, comp, 4.0 / 9.0)
    oracle = QuadraticOracle(0.5)
    compressor = scaling_compressor(comp, 1.0, debug=True)
    s0 = initial_state(cfg, oracle, compressor, x0=1.0)
    assert s0["d"][0] == pytest.approx(0.75, abs=1e-15)
    s1 = step(cfg, oracle, compressor, s0)
    assert s1["x"][0] == pytest.approx(2.0 / 3.0, abs=1e-15)


def test_identity_compressor_reduces_to_gradient_descent():
    pc = ProblemClass(0.5, 1.0)
    oracle = QuadraticOracle(0.5)
    compressor = identity_compressor(debug=True)
    eta = 0.8
    x = 1.0
    for method in (MethodId.EF, MethodId.EF21):
        cfg = MethodConfig(method, pc, Compression(0.0), eta)
        traj = simulate(cfg, oracle, compressor, initial_state(cfg, oracle, compressor, x0=x), 20)
        xs = [s["x"][0] for s in traj.states]
        expected = [x * (1 - eta * 0.5) ** k for k in range(21)]
        np.testing.assert_allclose(xs, expected, atol=1e-13)
        if method == MethodId.EF:
            assert all(abs(s["e"][0]) == 0.0 for s in traj.states)


def test_simulate_trivial_cases():
    pc = ProblemClass(0.999, 1.0)
    cfg = MethodConfig(MethodId.CGD, pc, Compression(0.0), 1.0)
    oracle = QuadraticOracle(1.0)
    compressor = identity_compressor()
    s0 = initial_state(cfg, oracle, compressor, x0=3.0)
    traj0 = simulate(cfg, oracle, compressor, s0, 0)
    assert len(traj0) == 1
    # one-step convergence of GD with eta = 1/L on f_L, repeated
    traj = simulate(cfg, oracle, compressor, s0, 50)
    assert traj.states[-1]["x"][0] == 0.0


def test_worst_case_cross_check_against_simulation():
    pc = ProblemClass(0.5, 1.0)
    comp = Compression(0.25)
    eta = 4.0 / 9.0
    oracle = QuadraticOracle(pc.mu)
    compressor = scaling_compressor(comp, 1.0, debug=True)
    for method in (MethodId.EF, MethodId.EF21):
        cfg = MethodConfig(method, pc, comp, eta)
        ref = worst_case_trajectory(method, pc.mu, comp, eta, 200)
        sim = simulate(cfg, oracle, compressor, initial_state(cfg, oracle, compressor, x0=1.0), 200)
        for sr, ss in zip(ref.states, sim.states):
            for lab in sr.components:
                assert abs(sr[lab][0] - ss[lab][0]) <= 1e-10


def test_worst_case_replay_is_bitwise():
    pc = ProblemClass(0.1, 1.0)
    comp = Compression(0.5)
    cfg = MethodConfig(MethodId.EF, pc, comp, 0.3)
    oracle = QuadraticOracle(0.7)
    compressor = scaling_compressor(comp, 0.4)
    traj = simulate(cfg, oracle, compressor, initial_state(cfg, oracle, compressor, x0=2.0), 30)
    for sk, sk1 in zip(traj.states, traj.states[1:]):
        redo = step(cfg, oracle, compressor, sk)
        for lab in sk1.components:
            assert np.array_equal(redo[lab], sk1[lab])


def test_dominant_root_examples():
    comp = Compression(0.25)
    eta = 4.0 / 9.0
    traj = worst_case_trajectory(MethodId.EF, 0.5, comp, eta, 200)
    xs = [s["x"][0] for s in traj.states]
    ratio = xs[-1] / xs[-2]
    r = dominant_root(0.5, 0.25, eta)
    assert r == pytest.approx(0.79533, abs=5e-6)
    assert ratio == pytest.approx(float(np.real(r)), abs=1e-10)
    # balanced roots at the tuned step size
    assert abs(abs(dominant_root(0.5, 0.25, eta)) - abs(dominant_root(1.0, 0.25, eta))) < 1e-12
    # eps -> 0 limit: plain gradient-descent factor
    tiny = worst_case_trajectory(MethodId.EF, 0.5, Compression(0.0), 0.5, 10)
    xs0 = [s["x"][0] for s in tiny.states]
    assert xs0[5] / xs0[4] == pytest.approx(1 - 0.5 * 0.5, abs=1e-14)


def test_empirical_contraction_tail():
    comp = Compression(0.25)
    eta = 4.0 / 9.0
    expected = float(np.abs(dominant_root(0.5, 0.25, eta)) ** 2)
    traj = worst_case_trajectory(MethodId.EF, 0.5, comp, eta, 200)
    ratios = empirical_contraction(traj, ef_closed_form_lyapunov(comp))
    assert ratios[-1] == pytest.approx(expected, abs=1e-9)
    assert ratios[-1] == pytest.approx(0.63256, abs=5e-6)

    traj21 = worst_case_trajectory(MethodId.EF21, 0.5, comp, eta, 200)
    ratios21 = empirical_contraction(traj21, ef21_closed_form_lyapunov(comp))
    assert ratios21[-1] == pytest.approx(expected, abs=1e-9)


def test_empirical_contraction_gd_constant():
    pc = ProblemClass(0.5, 1.0)
    eta = 2.0 / (pc.L + pc.mu)
    traj = worst_case_trajectory(MethodId.EF, pc.mu, Compression(0.0), eta, 40)
    dist = LyapunovCandidate([[1.0, 0.0], [0.0, 0.0]], 0.0, ("x", "e"), normalize=False)
    ratios = empirical_contraction(traj, dist)
    kappa = pc.kappa
    expected = ((kappa - 1) / (kappa + 1)) ** 2
    np.testing.assert_allclose(ratios, expected, atol=1e-13)


def test_empirical_contraction_floor_truncates():
    comp = Compression(0.0)
    traj = worst_case_trajectory(MethodId.EF, 1.0, comp, 1.0, 5)  # converges in one step
    ratios = empirical_contraction(traj, ef_closed_form_lyapunov(comp, normalize=False))
    assert len(ratios) == 1 and ratios[0] == 0.0


def test_csv_serialization():
    comp = Compression(0.25)
    traj = worst_case_trajectory(MethodId.EF, 0.5, comp, 4.0 / 9.0, 3)
    text = traj.to_csv(ef_closed_form_lyapunov(comp))
    lines = text.strip().split("\n")
    assert lines[0] == "k,x,g,c_or_d,e,V"
    assert len(lines) == 5
    first = lines[1].split(",")
    assert first[0] == "0" and float(first[1]) == 1.0 and first[4] != ""

    traj21 = worst_case_trajectory(MethodId.EF21, 0.5, comp, 4.0 / 9.0, 2)
    lines21 = traj21.to_csv().strip().split("\n")
    assert lines21[1].split(",")[4] == ""  # no e column for EF21
