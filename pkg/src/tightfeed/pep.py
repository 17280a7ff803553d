"""Lifted Gram-matrix worst-case problems for the compressed-gradient methods:
basis layouts after update substitution, interpolation and compressor
constraint matrices, and the three problem modes (fixed-Lyapunov worst case,
Lyapunov-search feasibility with bisection, cycle detection), all over 1..K
composed steps.

With an exact compressor (eps = 0) every method generates plain
gradient-descent iterates from its canonical initialization, so the high-level
operations route eps = 0 through a two-state (x, g) layout with no compressor
constraints.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import sdp
from .model import Compression, LyapunovCandidate, MethodId, ProblemClass, STATE_LABELS

#: Decisions of the margin-feasibility solve: a candidate is accepted only if
#: the achieved interior margin clears this threshold and the point re-verifies.
FEAS_MARGIN = 1e-7
#: Post-hoc verification slack on the LMI eigenvalues and linear rows.
VERIFY_TOL = 1e-7
#: Cycle detection threshold on the return gap.
CYCLE_TOL = 1e-3

MODE_WORST_CASE = "worst-case"
MODE_SEARCH = "search"
MODE_CYCLE = "cycle"


class SolverFailure(RuntimeError):
    """A conic solve did not reach the required status; carries diagnostics."""


def _sym_outer(u, v):
    return 0.5 * (np.outer(u, v) + np.outer(v, u))


@dataclass(frozen=True)
class BasisLayout:
    """Independent-symbol basis after update substitution, with a derived-row
    table mapping every labeled quantity (and the all-zero fixed point) to a
    coefficient row over the basis."""

    method: MethodId | None  # None: exact-compressor (gradient-descent) layout
    K: int
    eta: float
    names: tuple[str, ...]
    state_labels: tuple[str, ...]
    rows_table: dict

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def fdim(self) -> int:
        return self.K + 1

    @property
    def points(self) -> list:
        return list(range(self.K + 1)) + ["star"]

    def row(self, label: str, k) -> np.ndarray:
        if k == "star":
            return np.zeros(self.n)
        key = (label, int(k))
        if key not in self.rows_table:
            raise KeyError(f"no row for {label}_{k} in this layout")
        return self.rows_table[key]

    def fbar(self, k) -> np.ndarray:
        out = np.zeros(self.fdim)
        if k != "star":
            out[int(k)] = 1.0
        return out

    def state_matrix(self, k) -> np.ndarray:
        return np.array([self.row(lab, k) for lab in self.state_labels])

    def rows_for(self, labels, k) -> np.ndarray:
        return np.array([self.row(lab, k) for lab in labels])


def build_layout(method: MethodId | None, K: int, eta: float) -> BasisLayout:
    """Basis for K composed steps.  Independent symbols are the gradients at
    every sampled point, the compressed messages, the initial iterate and the
    initial auxiliary state; later iterates/errors/estimators are linear rows
    derived from the update equations.  (The EF21 iterate moves against the
    estimator: x_{k+1} = x_k - eta * d_k.)"""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if method is None:
        names = ["x0"] + [f"g{k}" for k in range(K + 1)]
    elif method == MethodId.EF:
        names = (
            ["x0"]
            + [f"g{k}" for k in range(K + 1)]
            + [f"c{k}" for k in range(K + 1)]
            + ["e0"]
        )
    elif method == MethodId.EF21:
        names = (
            ["x0"]
            + [f"g{k}" for k in range(K + 1)]
            + [f"c{k}" for k in range(K)]
            + ["d0"]
        )
    else:
        names = ["x0"] + [f"g{k}" for k in range(K + 1)] + [f"c{k}" for k in range(K + 1)]
    index = {nm: i for i, nm in enumerate(names)}
    n = len(names)

    def unit(nm):
        row = np.zeros(n)
        row[index[nm]] = 1.0
        return row

    rows: dict = {}
    rows[("x", 0)] = unit("x0")
    for k in range(K + 1):
        rows[("g", k)] = unit(f"g{k}")

    if method is None:
        for k in range(K):
            rows[("x", k + 1)] = rows[("x", k)] - eta * rows[("g", k)]
        # exact-compressor images of the auxiliary quantities
        for k in range(K + 1):
            rows[("c", k)] = eta * rows[("g", k)]
            rows[("e", k)] = np.zeros(n)
            rows[("d", k)] = rows[("g", k)]
        labels = ("x", "g")
    elif method == MethodId.EF:
        rows[("e", 0)] = unit("e0")
        for k in range(K + 1):
            rows[("c", k)] = unit(f"c{k}")
        for k in range(K):
            rows[("x", k + 1)] = rows[("x", k)] - rows[("c", k)]
            rows[("e", k + 1)] = rows[("e", k)] + eta * rows[("g", k)] - rows[("c", k)]
        labels = STATE_LABELS[MethodId.EF]
    elif method == MethodId.EF21:
        rows[("d", 0)] = unit("d0")
        for k in range(K):
            rows[("c", k)] = unit(f"c{k}")
        for k in range(K):
            rows[("x", k + 1)] = rows[("x", k)] - eta * rows[("d", k)]
            rows[("d", k + 1)] = rows[("d", k)] + rows[("c", k)]
        labels = STATE_LABELS[MethodId.EF21]
    else:  # CGD: the compressed message carries the step size
        for k in range(K + 1):
            rows[("c", k)] = unit(f"c{k}")
        for k in range(K):
            rows[("x", k + 1)] = rows[("x", k)] - rows[("c", k)]
        labels = STATE_LABELS[MethodId.CGD]

    return BasisLayout(method, K, float(eta), tuple(names), labels, rows)


def _layout_for(method: MethodId, comp: Compression, K: int, eta: float) -> BasisLayout:
    return build_layout(None if comp.epsilon == 0.0 else method, K, eta)


def interp_pair_forms(layout: BasisLayout, i, j, mu: float, L: float):
    """Quadratic/linear coefficient pair (M_ij, m_ij) of the smooth strongly
    convex interpolation inequality phi_ij >= 0 between sampled points i, j.
    mu = 0 reduces to the smooth-convex cocoercivity form."""
    xi, gi = layout.row("x", i), layout.row("g", i)
    xj, gj = layout.row("x", j), layout.row("g", j)
    dx, dg = xi - xj, gi - gj
    M = -_sym_outer(gj, dx) - np.outer(dg, dg) / (2.0 * L)
    if mu != 0.0:
        w = dx - dg / L
        M = M - mu / (2.0 * (1.0 - mu / L)) * np.outer(w, w)
    m = layout.fbar(i) - layout.fbar(j)
    return M, m


def interpolation_matrices(layout: BasisLayout, pc: ProblemClass):
    """(M_ij, m_ij) for every ordered pair of distinct points in {0..K, star},
    with the sign fixed so membership in F_{mu,L} means phi_ij >= 0."""
    out = []
    for i in layout.points:
        for j in layout.points:
            if i != j:
                out.append((i, j) + interp_pair_forms(layout, i, j, pc.mu, pc.L))
    return out


def compressor_matrices(method: MethodId, layout: BasisLayout, comp: Compression, eta: float, K: int):
    """Per-step compressor constraint matrices, encoded so the constraint is
    Tr(C G) <= 0.  EF and CGD constrain every sampled message (the terminal
    state includes the next message); EF21 constrains one message per step."""
    if layout.method is None:
        return []
    if (layout.method, layout.K, layout.eta) != (method, K, float(eta)):
        raise ValueError("layout does not match the requested method/eta/K")
    out = []
    if method == MethodId.EF21:
        for k in range(K):
            u = layout.row("g", k + 1) - layout.row("d", k)
            c = layout.row("c", k)
            out.append(np.outer(u - c, u - c) - comp.epsilon * np.outer(u, u))
        return out
    for k in range(K + 1):
        if method == MethodId.EF:
            u = eta * layout.row("g", k) + layout.row("e", k)
        else:
            u = eta * layout.row("g", k)
        c = layout.row("c", k)
        out.append(np.outer(u - c, u - c) - comp.epsilon * np.outer(u, u))
    return out


@dataclass(frozen=True)
class GramProblem:
    """Assembled lifted problem data for one mode."""

    layout: BasisLayout
    mode: str
    interp: list
    comps: list
    rho: float | None = None
    cand: LyapunovCandidate | None = None

    def to_debug_json(self) -> str:
        return json.dumps(
            {
                "mode": self.mode,
                "method": self.layout.method.value if self.layout.method else "gd",
                "K": self.layout.K,
                "eta": self.layout.eta,
                "basis": list(self.layout.names),
                "rho": self.rho,
                "interpolation": [
                    {"i": str(i), "j": str(j), "M": [float(v) for v in M.reshape(-1)],
                     "m": [float(v) for v in m]}
                    for i, j, M, m in self.interp
                ],
                "compressor": [[float(v) for v in C.reshape(-1)] for C in self.comps],
            }
        )


def build_gram_problem(
    method: MethodId,
    pc: ProblemClass,
    comp: Compression,
    eta: float,
    K: int,
    mode: str,
    rho: float | None = None,
    cand: LyapunovCandidate | None = None,
) -> GramProblem:
    if mode not in (MODE_WORST_CASE, MODE_SEARCH, MODE_CYCLE):
        raise ValueError(f"unknown mode {mode!r}")
    layout = _layout_for(method, comp, K, eta)
    interp = interpolation_matrices(layout, pc)
    comps = (
        compressor_matrices(method, layout, comp, eta, K)
        if layout.method is not None
        else []
    )
    return GramProblem(layout, mode, interp, comps, rho, cand)


# ---------------------------------------------------------------------------
# fixed-Lyapunov worst case
# ---------------------------------------------------------------------------


def _candidate_form(layout: BasisLayout, cand: LyapunovCandidate, k):
    A = layout.rows_for(cand.labels, k)
    return A.T @ cand.P @ A


def worst_case_ratio(
    method: MethodId,
    pc: ProblemClass,
    comp: Compression,
    eta: float,
    cand: LyapunovCandidate,
    K: int = 1,
    feas_tol: float = 1e-8,
    max_iter: int = sdp.DEFAULT_MAX_ITER,
) -> float:
    """Exact worst case of V_K subject to V_0 = 1 over the lifted constraint
    set: the K-step contraction factor of the given candidate (before the
    1/K-th root)."""
    gram = build_gram_problem(method, pc, comp, eta, K, MODE_WORST_CASE, cand=cand)
    layout = gram.layout
    n = layout.n
    prog = sdp.ConicProgram([n], orth_dim=layout.fdim)
    V0 = _candidate_form(layout, cand, 0)
    VK = _candidate_form(layout, cand, K)
    obj_orth = np.zeros(layout.fdim)
    obj_orth[K] = -cand.p
    prog.set_objective(psd={0: -VK}, orth=obj_orth)
    row0 = np.zeros(layout.fdim)
    row0[0] = cand.p
    prog.add_row("=", 1.0, psd={0: V0}, orth=row0)
    for _, _, M, m in gram.interp:
        prog.add_row(">=", 0.0, psd={0: M}, orth=m)
    for C in gram.comps:
        prog.add_row("<=", 0.0, psd={0: C})
    out = sdp.solve(prog, feas_tol=feas_tol, gap_tol=feas_tol, max_iter=max_iter)
    if out.status != "optimal":
        raise SolverFailure(
            f"worst-case solve failed: status={out.status}, "
            f"pri={out.pri_res:.2e}, dua={out.dua_res:.2e}, gap={out.gap:.2e}, "
            f"iters={out.iterations}"
        )
    return -out.objective


# ---------------------------------------------------------------------------
# Lyapunov search (feasibility with interior margin) and bisection
# ---------------------------------------------------------------------------


def _search_program(gram: GramProblem, rho: float):
    """Margin formulation of the search feasibility problem: maximize t s.t.

        A_K' P A_K - rho A_0' P A_0 + sum lam M - sum nu C + t I <= 0  (as S >= 0 slack)
        p (fbar_K - rho fbar_0) + sum lam m <= 0   componentwise
        P >= 0, p >= 0, lam >= 0, nu >= 0, Tr(P) + p = 1, t <= 2

    The compressor matrices enter with a minus sign: that is the convention
    under which the known closed-form certificates are feasible points.
    """
    layout = gram.layout
    n = layout.n
    ell = len(layout.state_labels)
    npairs, ncomp = len(gram.interp), len(gram.comps)
    # orthant: [p, lam..., nu..., t+, t-]
    orth_dim = 1 + npairs + ncomp + 2
    i_p, i_lam, i_nu = 0, 1, 1 + npairs
    i_tp, i_tm = 1 + npairs + ncomp, 1 + npairs + ncomp + 1

    prog = sdp.ConicProgram([ell, n], orth_dim=orth_dim)
    obj = np.zeros(orth_dim)
    obj[i_tp], obj[i_tm] = -1.0, 1.0  # maximize t = t+ - t-
    prog.set_objective(orth=obj)

    A0 = layout.state_matrix(0)
    AK = layout.state_matrix(layout.K)
    for r in range(n):
        for s in range(r, n):
            sel = np.zeros((n, n))
            sel[r, s] = sel[s, r] = 0.5 if r != s else 1.0
            coefP = AK @ sel @ AK.T - rho * (A0 @ sel @ A0.T)
            orth = np.zeros(orth_dim)
            for idx, (_, _, M, _) in enumerate(gram.interp):
                orth[i_lam + idx] = M[r, s]
            for idx, C in enumerate(gram.comps):
                orth[i_nu + idx] = -C[r, s]
            if r == s:
                orth[i_tp], orth[i_tm] = 1.0, -1.0
            prog.add_row("=", 0.0, psd={0: 0.5 * (coefP + coefP.T), 1: sel}, orth=orth)
    for comp_idx in range(layout.fdim):
        orth = np.zeros(orth_dim)
        orth[i_p] = layout.fbar(layout.K)[comp_idx] - rho * layout.fbar(0)[comp_idx]
        for idx, (_, _, _, m) in enumerate(gram.interp):
            orth[i_lam + idx] = m[comp_idx]
        prog.add_row("<=", 0.0, orth=orth)
    tr_orth = np.zeros(orth_dim)
    tr_orth[i_p] = 1.0
    prog.add_row("=", 1.0, psd={0: np.eye(ell)}, orth=tr_orth)
    cap = np.zeros(orth_dim)
    cap[i_tp] = 1.0
    prog.add_row("<=", 2.0, orth=cap)
    return prog, (i_p, i_lam, i_nu, i_tp, i_tm)


def _verify_search_point(gram: GramProblem, rho: float, P, p, lam, nu) -> bool:
    layout = gram.layout
    A0, AK = layout.state_matrix(0), layout.state_matrix(layout.K)
    E = AK.T @ P @ AK - rho * (A0.T @ P @ A0)
    for idx, (_, _, M, _) in enumerate(gram.interp):
        E = E + lam[idx] * M
    for idx, C in enumerate(gram.comps):
        E = E - nu[idx] * C
    if np.linalg.eigvalsh(0.5 * (E + E.T))[-1] > VERIFY_TOL:
        return False
    fb = layout.fbar(layout.K) - rho * layout.fbar(0)
    lin = p * fb + sum(lam[idx] * m for idx, (_, _, _, m) in enumerate(gram.interp))
    return bool(np.max(lin) <= VERIFY_TOL)


def search_lyapunov(
    method: MethodId,
    pc: ProblemClass,
    comp: Compression,
    eta: float,
    rho: float,
    K: int = 1,
    max_iter: int = sdp.DEFAULT_MAX_ITER,
):
    """Search the normalized candidate class for a Lyapunov function certifying
    contraction factor rho over K steps.  Returns (candidate, multipliers) or
    None when no candidate exists (undecided solves count as none; the reported
    bisection optimum is then an upper bound)."""
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    gram = build_gram_problem(method, pc, comp, eta, K, MODE_SEARCH, rho=rho)
    prog, (i_p, i_lam, i_nu, i_tp, i_tm) = _search_program(gram, rho)
    out = sdp.solve(prog, feas_tol=1e-8, gap_tol=1e-8, max_iter=max_iter)
    if out.status not in ("optimal", "infeasible"):
        raise SolverFailure(
            f"search solve failed at rho={rho}: status={out.status}, "
            f"pri={out.pri_res:.2e}, dua={out.dua_res:.2e}, gap={out.gap:.2e}"
        )
    if out.status == "infeasible":
        return None
    t = out.orth[i_tp] - out.orth[i_tm]
    if t < FEAS_MARGIN:
        return None
    P = sdp.psd_clip(out.psd_blocks[0])
    p = max(float(out.orth[i_p]), 0.0)
    lam = np.maximum(out.orth[i_lam : i_lam + len(gram.interp)], 0.0)
    nu = np.maximum(out.orth[i_nu : i_nu + len(gram.comps)], 0.0)
    if not _verify_search_point(gram, rho, P, p, lam, nu):
        return None
    cand = LyapunovCandidate(P, p, gram.layout.state_labels)
    mult = {
        "lambda": {(str(i), str(j)): float(lam[idx]) for idx, (i, j, _, _) in enumerate(gram.interp)},
        "nu": [float(v) for v in nu],
        "margin": float(t),
    }
    return cand, mult


@dataclass(frozen=True)
class BisectionResult:
    rho: float | None
    cand: LyapunovCandidate | None
    multipliers: dict | None
    converged: bool
    n_solves: int

    @property
    def non_convergent(self) -> bool:
        return not self.converged


def bisect_optimal_rate(
    method: MethodId,
    pc: ProblemClass,
    comp: Compression,
    eta: float,
    tol: float = 1e-6,
    K: int = 1,
    hi: float = 2.0,
    max_iter: int = sdp.DEFAULT_MAX_ITER,
) -> BisectionResult:
    """Smallest rho (within tol) admitting a candidate Lyapunov function, by
    bisection on [0, hi]; hi is probed first and a failure there reports
    non-convergence."""
    found = search_lyapunov(method, pc, comp, eta, hi, K=K, max_iter=max_iter)
    n_solves = 1
    if found is None:
        return BisectionResult(None, None, None, False, n_solves)
    lo, best = 0.0, found
    rho_hi = hi
    while rho_hi - lo > tol:
        mid = 0.5 * (rho_hi + lo)
        trial = search_lyapunov(method, pc, comp, eta, mid, K=K, max_iter=max_iter)
        n_solves += 1
        if trial is None:
            lo = mid
        else:
            rho_hi, best = mid, trial
    return BisectionResult(rho_hi, best[0], best[1], True, n_solves)


# ---------------------------------------------------------------------------
# cycle detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CycleReport:
    is_cycle: bool
    gap: float  # worst-case return gap ||x_K - x_0||^2 + auxiliary terms


def cycle_check(
    method: MethodId,
    pc: ProblemClass,
    comp: Compression,
    eta: float,
    K: int = 2,
    max_iter: int = sdp.DEFAULT_MAX_ITER,
) -> CycleReport:
    """Detect nonzero K-periodic trajectories: minimize the return gap
    ||x_K - x_0||^2 (plus ||e_K - e_0||^2 for EF, ||d_K - d_0||^2 for EF21)
    subject to unit initial joint norm.  A gap below CYCLE_TOL flags a cycle."""
    if K < 2:
        raise ValueError(f"cycle check needs K >= 2, got {K}")
    gram = build_gram_problem(method, pc, comp, eta, K, MODE_CYCLE)
    layout = gram.layout
    aux = {MethodId.EF: "e", MethodId.EF21: "d"}.get(method)
    dx = layout.row("x", K) - layout.row("x", 0)
    gap_mat = np.outer(dx, dx)
    norm_mat = np.outer(layout.row("x", 0), layout.row("x", 0))
    if aux is not None and layout.method is not None:
        da = layout.row(aux, K) - layout.row(aux, 0)
        gap_mat = gap_mat + np.outer(da, da)
        norm_mat = norm_mat + np.outer(layout.row(aux, 0), layout.row(aux, 0))
    prog = sdp.ConicProgram([layout.n], orth_dim=layout.fdim)
    prog.set_objective(psd={0: gap_mat})
    prog.add_row("=", 1.0, psd={0: norm_mat})
    for _, _, M, m in gram.interp:
        prog.add_row(">=", 0.0, psd={0: M}, orth=m)
    for C in gram.comps:
        prog.add_row("<=", 0.0, psd={0: C})
    out = sdp.solve(prog, max_iter=max_iter)
    if out.status != "optimal":
        raise SolverFailure(
            f"cycle solve failed: status={out.status}, pri={out.pri_res:.2e}, "
            f"dua={out.dua_res:.2e}, gap={out.gap:.2e}"
        )
    gap = max(float(out.objective), 0.0)
    return CycleReport(gap < CYCLE_TOL, gap)


# ---------------------------------------------------------------------------
# logdet rank-minimization pass
# ---------------------------------------------------------------------------


def logdet_simplify(
    method: MethodId,
    pc: ProblemClass,
    comp: Compression,
    eta: float,
    rho: float,
    max_rounds: int = 20,
    delta: float = 1e-6,
    max_iter: int = sdp.DEFAULT_MAX_ITER,
) -> LyapunovCandidate:
    """Iteratively reweighted trace minimization over the search feasible set
    at fixed rho: repeat minimize Tr(W P) + w p, then W <- (P + delta I)^-1,
    w <- 1/(p + delta), until the rank profile stabilizes.  Returns the
    low-rank candidate, renormalized."""
    gram = build_gram_problem(method, pc, comp, eta, 1, MODE_SEARCH, rho=rho)
    prog, (i_p, i_lam, i_nu, i_tp, i_tm) = _search_program(gram, rho)
    ell = len(gram.layout.state_labels)
    # fix the margin to zero: plain feasibility at the given rho
    zero_t = np.zeros(prog.orth_dim)
    zero_t[i_tp] = 1.0
    prog.add_row("=", 0.0, orth=zero_t)
    zero_t = np.zeros(prog.orth_dim)
    zero_t[i_tm] = 1.0
    prog.add_row("=", 0.0, orth=zero_t)

    W, w = np.eye(ell), 1.0
    P, p = None, None
    profile_prev = None
    for _ in range(max_rounds):
        obj_orth = np.zeros(prog.orth_dim)
        obj_orth[i_p] = w
        prog.set_objective(psd={0: W}, orth=obj_orth)
        out = sdp.solve(prog, max_iter=max_iter)
        if out.status != "optimal":
            raise SolverFailure(
                f"logdet round failed at rho={rho}: status={out.status}, "
                f"pri={out.pri_res:.2e}, dua={out.dua_res:.2e}"
            )
        P = sdp.psd_clip(out.psd_blocks[0])
        p = max(float(out.orth[i_p]), 0.0)
        scale = np.trace(P) + p
        eigs = np.linalg.eigvalsh(P / scale)
        profile = tuple(eigs > 1e-5)
        if profile == profile_prev:
            break
        profile_prev = profile
        W = np.linalg.inv(P + delta * np.eye(ell))
        W = 0.5 * (W + W.T)
        w = 1.0 / (p + delta)
    return LyapunovCandidate(P, p, gram.layout.state_labels)
