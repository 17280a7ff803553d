"""Executable method steps with pluggable oracles and contractive compressors,
plus the scalar worst-case quadratic trajectories and their contraction ratios."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .model import Compression, LyapunovCandidate, MethodConfig, MethodId, StateVector, evaluate_lyapunov

#: Lyapunov values below this floor terminate ratio sequences.
VALUE_FLOOR = 1e-300


class Compressor:
    """Deterministic compressor with an optional contract check.

    With debug=True every call asserts ||v - C(v)||^2 <= eps ||v||^2.
    """

    def __init__(self, fn, comp: Compression, name: str, debug: bool = False):
        self._fn = fn
        self.comp = comp
        self.name = name
        self.debug = debug

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        out = np.atleast_1d(np.asarray(self._fn(v), dtype=float))
        if self.debug:
            lhs = float(np.dot(v - out, v - out))
            rhs = self.comp.epsilon * float(np.dot(v, v))
            if lhs > rhs + 1e-12 * (1.0 + rhs):
                raise AssertionError(
                    f"compressor {self.name} violated contract: "
                    f"||v-C(v)||^2 = {lhs} > eps ||v||^2 = {rhs}"
                )
        return out


def identity_compressor(debug: bool = False) -> Compressor:
    return Compressor(lambda v: v, Compression(0.0), "identity", debug)


def scaling_compressor(comp: Compression, theta: float = 1.0, debug: bool = False) -> Compressor:
    """Scalar contraction family C(v) = (1 + theta*sqrt(eps)) v, theta in [-1, 1].

    theta = +1 saturates the contract (||v - C(v)|| = sqrt(eps)||v||) and is the
    worst-case instance used by the lower-bound trajectories.
    """
    if not -1.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [-1, 1], got {theta}")
    factor = 1.0 + theta * comp.root
    return Compressor(lambda v: factor * v, comp, f"scaling(theta={theta})", debug)


def top1_compressor(comp: Compression, debug: bool = False) -> Compressor:
    """Keep the largest-magnitude coordinate, zero the rest (exploratory, d >= 2).

    Satisfies the contract only when eps >= 1 - 1/d; the debug check enforces it.
    """

    def fn(v):
        out = np.zeros_like(v)
        i = int(np.argmax(np.abs(v)))
        out[i] = v[i]
        return out

    return Compressor(fn, comp, "top1", debug)


@dataclass(frozen=True)
class QuadraticOracle:
    """f_c(x) = (c/2)||x||^2 in shifted coordinates (minimizer at the origin).

    Belongs to F_{mu,L} when c lies in [mu, L]; membership is the caller's duty.
    """

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"curvature must be positive, got {self.c}")

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.c * np.asarray(x, dtype=float)

    def fval_gap(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * self.c * float(np.dot(x, x))


@dataclass(frozen=True)
class Trajectory:
    states: tuple[StateVector, ...]
    fval_gaps: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.states)

    def to_csv(self, cand: LyapunovCandidate | None = None) -> str:
        """Serialize a scalar (d = 1) trajectory: k, x, g, c_or_d, e, V."""
        if self.states and self.states[0].dim != 1:
            raise ValueError("CSV serialization supports scalar trajectories only")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "x", "g", "c_or_d", "e", "V"])
        for k, (s, gap) in enumerate(zip(self.states, self.fval_gaps)):
            cd = s["d"] if s.method == MethodId.EF21 else s["c"]
            e = repr(float(s["e"][0])) if s.method == MethodId.EF else ""
            v = repr(evaluate_lyapunov(cand, s, gap)) if cand is not None else ""
            writer.writerow([k, repr(float(s["x"][0])), repr(float(s["g"][0])), repr(float(cd[0])), e, v])
        return buf.getvalue()


def initial_state(
    cfg: MethodConfig,
    oracle,
    compressor: Compressor,
    x0,
    e0=None,
    d0=None,
) -> StateVector:
    """Assemble the full labeled state at k = 0 from the free initial data.

    EF starts from e0 = 0 and EF21 from d0 = C(grad f(x0)) unless overridden.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    g0 = oracle.grad(x0)
    if cfg.method == MethodId.CGD:
        return StateVector.make(MethodId.CGD, x=x0, g=g0, c=compressor(cfg.eta * g0))
    if cfg.method == MethodId.EF:
        e0 = np.zeros_like(x0) if e0 is None else np.atleast_1d(np.asarray(e0, dtype=float))
        return StateVector.make(MethodId.EF, x=x0, g=g0, c=compressor(e0 + cfg.eta * g0), e=e0)
    d0 = compressor(g0) if d0 is None else np.atleast_1d(np.asarray(d0, dtype=float))
    return StateVector.make(MethodId.EF21, x=x0, g=g0, d=d0)


def step(cfg: MethodConfig, oracle, compressor: Compressor, state: StateVector) -> StateVector:
    """One exact method step; derived components (g, c) are recomputed so a
    stored trajectory replays bitwise."""
    if state.method != cfg.method:
        raise ValueError(f"state is for {state.method.value}, config for {cfg.method.value}")
    eta = cfg.eta
    x = state["x"]
    if cfg.method == MethodId.CGD:
        msg = compressor(eta * oracle.grad(x))
        x1 = x - msg
        g1 = oracle.grad(x1)
        return StateVector.make(MethodId.CGD, x=x1, g=g1, c=compressor(eta * g1))
    if cfg.method == MethodId.EF:
        e = state["e"]
        msg = compressor(e + eta * oracle.grad(x))
        x1 = x - msg
        e1 = e + eta * oracle.grad(x) - msg
        g1 = oracle.grad(x1)
        return StateVector.make(MethodId.EF, x=x1, g=g1, c=compressor(e1 + eta * g1), e=e1)
    # EF21: the iterate moves with the current estimator, then the estimator
    # absorbs the compressed gradient difference at the new point.
    d = state["d"]
    x1 = x - eta * d
    g1 = oracle.grad(x1)
    d1 = d + compressor(g1 - d)
    return StateVector.make(MethodId.EF21, x=x1, g=g1, d=d1)


def simulate(cfg: MethodConfig, oracle, compressor: Compressor, initial: StateVector, K: int) -> Trajectory:
    if K < 0:
        raise ValueError(f"K must be nonnegative, got {K}")
    states = [initial]
    for _ in range(K):
        states.append(step(cfg, oracle, compressor, states[-1]))
    gaps = tuple(oracle.fval_gap(s["x"]) for s in states)
    return Trajectory(tuple(states), gaps)


def worst_case_trajectory(method: MethodId, curvature: float, comp: Compression, eta: float, K: int) -> Trajectory:
    """Scalar trajectory on f(x) = (c/2)x^2 under the contract-saturating
    compressor C(v) = (1 + sqrt(eps)) v, generated by the second-order recurrence

        x_{k+2} = (1 - eta*c - sqrt(eps)(1 + eta*c)) x_{k+1} + sqrt(eps) x_k

    from x_0 = 1 with e_0 = 0 (EF) or d_0 = (1 + sqrt(eps)) c x_0 (EF21).
    Auxiliary states are recovered from consecutive iterates.  eps = 0 is the
    degenerate first-order case, i.e. plain gradient descent.
    """
    if method not in (MethodId.EF, MethodId.EF21):
        raise ValueError(f"worst-case trajectory defined for EF/EF21, got {method}")
    if K < 0:
        raise ValueError(f"K must be nonnegative, got {K}")
    c, rt = float(curvature), comp.root
    xs = np.empty(K + 2)
    xs[0] = 1.0
    if comp.epsilon == 0.0:
        for k in range(K + 1):
            xs[k + 1] = (1.0 - eta * c) * xs[k]
    else:
        xs[1] = (1.0 - eta * c * (1.0 + rt)) * xs[0]
        beta = 1.0 - eta * c - rt * (1.0 + eta * c)
        for k in range(K):
            xs[k + 2] = beta * xs[k + 1] + rt * xs[k]

    states = []
    for k in range(K + 1):
        g = c * xs[k]
        if method == MethodId.EF:
            if comp.epsilon == 0.0:
                e, msg = 0.0, eta * g
            else:
                e = ((1.0 - eta * c * (1.0 + rt)) * xs[k] - xs[k + 1]) / (1.0 + rt)
                msg = (1.0 + rt) * (eta * g + e)
            states.append(StateVector.make(MethodId.EF, x=xs[k], g=g, c=msg, e=e))
        else:
            d = g if comp.epsilon == 0.0 else (xs[k] - xs[k + 1]) / eta
            states.append(StateVector.make(MethodId.EF21, x=xs[k], g=g, d=d))
    gaps = tuple(0.5 * c * xs[k] ** 2 for k in range(K + 1))
    return Trajectory(tuple(states), gaps)


def empirical_contraction(traj: Trajectory, cand: LyapunovCandidate) -> list[float]:
    """Per-step ratios V_{k+1}/V_k along a trajectory; the sequence is truncated
    at the first value below VALUE_FLOOR."""
    values = [evaluate_lyapunov(cand, s, gap) for s, gap in zip(traj.states, traj.fval_gaps)]
    ratios = []
    for vk, vk1 in zip(values, values[1:]):
        if vk <= VALUE_FLOOR:
            break
        ratios.append(vk1 / vk)
    return ratios
