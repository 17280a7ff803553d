"""Core domain types: function class, compression level, method configuration,
labeled method states, and quadratic-plus-functional Lyapunov candidates."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

TOL_PSD = 1e-9
TOL_NORM = 1e-10


class MethodId(str, Enum):
    CGD = "cgd"
    EF = "ef"
    EF21 = "ef21"


#: Ordered state-component labels for each method.
STATE_LABELS = {
    MethodId.CGD: ("x", "g", "c"),
    MethodId.EF: ("x", "g", "c", "e"),
    MethodId.EF21: ("x", "g", "d"),
}


@dataclass(frozen=True)
class ProblemClass:
    """Smooth strongly convex function class with moduli 0 < mu < L.

    mu = L is rejected: it collapses the class to a single quadratic and the
    interpolation form divides by (1 - mu/L).
    """

    mu: float
    L: float

    def __post_init__(self):
        if not (self.mu > 0 and np.isfinite(self.mu)):
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not (self.L > self.mu and np.isfinite(self.L)):
            raise ValueError(f"need mu < L, got mu={self.mu}, L={self.L}")

    @property
    def kappa(self) -> float:
        return self.L / self.mu


@dataclass(frozen=True)
class Compression:
    """Contraction parameter of a deterministic compressor, eps in [0, 1)."""

    epsilon: float

    def __post_init__(self):
        if not (0.0 <= self.epsilon < 1.0):
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")

    @property
    def root(self) -> float:
        """sqrt(epsilon), the quantity every rate formula is written in."""
        return float(np.sqrt(self.epsilon))


@dataclass(frozen=True)
class MethodConfig:
    method: MethodId
    pc: ProblemClass
    comp: Compression
    eta: float

    def __post_init__(self):
        if not (self.eta > 0 and np.isfinite(self.eta)):
            raise ValueError(f"eta must be positive, got {self.eta}")


@dataclass(frozen=True)
class StateVector:
    """Labeled method state, stored shifted so the fixed point is the origin
    (x means x - x_star, and g, c, e, d all vanish at the fixed point).

    All components share one dimension d >= 1.
    """

    method: MethodId
    components: dict[str, np.ndarray]

    def __post_init__(self):
        labels = STATE_LABELS[self.method]
        if tuple(self.components.keys()) != labels:
            raise ValueError(
                f"state labels {tuple(self.components)} do not match "
                f"{self.method.value} labels {labels}"
            )
        dims = {np.asarray(v).shape for v in self.components.values()}
        if len(dims) != 1:
            raise ValueError(f"components must share one dimension, got {dims}")
        object.__setattr__(
            self,
            "components",
            {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in self.components.items()},
        )

    @property
    def dim(self) -> int:
        return next(iter(self.components.values())).size

    def __getitem__(self, label: str) -> np.ndarray:
        return self.components[label]

    @staticmethod
    def make(method: MethodId, **components) -> "StateVector":
        labels = STATE_LABELS[method]
        if set(components) != set(labels):
            raise ValueError(
                f"{method.value} state needs components {labels}, got {tuple(components)}"
            )
        return StateVector(method, {k: components[k] for k in labels})


def _as_sym(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"P must be square, got shape {P.shape}")
    if np.max(np.abs(P - P.T)) > 1e-12 * max(1.0, np.max(np.abs(P))):
        raise ValueError("P must be symmetric")
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class LyapunovCandidate:
    """Quadratic-plus-functional Lyapunov candidate V = xi' (P (x) I) xi + p (f - f_star)
    over the listed state-component labels.

    P must be PSD (min eigenvalue >= -TOL_PSD) and p >= 0.  By default the pair
    is rescaled at construction so Tr(P) + p = 1; pass normalize=False to keep
    the raw scaling (e.g. for evaluating a textbook form verbatim).
    """

    P: np.ndarray
    p: float
    labels: tuple[str, ...]
    normalized: bool = field(default=True)

    def __init__(self, P, p, labels, normalize: bool = True):
        P = _as_sym(P)
        p = float(p)
        labels = tuple(labels)
        if P.shape[0] != len(labels):
            raise ValueError(f"P is {P.shape[0]}x{P.shape[0]} but got {len(labels)} labels")
        if p < -TOL_NORM:
            raise ValueError(f"p must be nonnegative, got {p}")
        p = max(p, 0.0)
        scale = np.trace(P) + p
        if normalize:
            if scale <= TOL_NORM:
                raise ValueError("cannot normalize a candidate with Tr(P) + p = 0")
            P = P / scale
            p = p / scale
        eigmin = float(np.linalg.eigvalsh(P)[0]) if P.size else 0.0
        if eigmin < -TOL_PSD:
            raise ValueError(f"P is not PSD: min eigenvalue {eigmin}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "normalized", bool(normalize))
        self.P.setflags(write=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "labels": list(self.labels),
                "P": [float(v) for v in self.P.reshape(-1)],
                "p": self.p,
                "normalized": self.normalized,
            }
        )

    @staticmethod
    def from_json(text: str) -> "LyapunovCandidate":
        data = json.loads(text)
        n = len(data["labels"])
        P = np.array(data["P"], dtype=float).reshape(n, n)
        return LyapunovCandidate(P, data["p"], data["labels"], normalize=False)


def optimal_step_size(pc: ProblemClass, comp: Compression) -> float:
    """Worst-case optimal step size (2/(L+mu)) * (1-sqrt(eps))/(1+sqrt(eps))."""
    rt = comp.root
    return (2.0 / (pc.L + pc.mu)) * (1.0 - rt) / (1.0 + rt)


def evaluate_lyapunov(cand: LyapunovCandidate, state: StateVector, fval_gap: float = 0.0) -> float:
    """Evaluate V at a (shifted) state: sum_{ab} P_ab <xi_a, xi_b> + p * fval_gap.

    The candidate labels must be a subset of the state's components; fval_gap
    is f(x) - f_star supplied by the caller (required nonnegative).
    """
    missing = [lab for lab in cand.labels if lab not in state.components]
    if missing:
        raise ValueError(f"candidate labels {missing} absent from {state.method.value} state")
    if fval_gap < 0:
        raise ValueError(f"fval_gap must be nonnegative, got {fval_gap}")
    rows = np.array([state[lab] for lab in cand.labels])
    return float(np.sum(cand.P * (rows @ rows.T)) + cand.p * fval_gap)


def ef_closed_form_lyapunov(comp: Compression, normalize: bool = True) -> LyapunovCandidate:
    """Rate-achieving EF candidate over (x, e):
    P = [[1, -1], [-1, 1 + 1/sqrt(eps)]], p = 0.

    With an exact compressor (eps = 0) the error sequence vanishes identically
    and the candidate degenerates to the squared distance.
    """
    if comp.epsilon == 0.0:
        P = np.array([[1.0, 0.0], [0.0, 0.0]])
    else:
        P = np.array([[1.0, -1.0], [-1.0, 1.0 + 1.0 / comp.root]])
    return LyapunovCandidate(P, 0.0, ("x", "e"), normalize=normalize)


def ef21_closed_form_lyapunov(comp: Compression, normalize: bool = True) -> LyapunovCandidate:
    """Rate-achieving EF21 candidate over (g, d):
    P = [[1 + sqrt(eps), -1], [-1, 1]], p = 0; eps = 0 degenerates to ||g||^2."""
    if comp.epsilon == 0.0:
        P = np.array([[1.0, 0.0], [0.0, 0.0]])
    else:
        P = np.array([[1.0 + comp.root, -1.0], [-1.0, 1.0]])
    return LyapunovCandidate(P, 0.0, ("g", "d"), normalize=normalize)
