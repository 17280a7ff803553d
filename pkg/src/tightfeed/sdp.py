"""Self-contained solver for small dense semidefinite programs: linear
objective over block variables (PSD blocks plus a nonnegative-orthant block)
with affine =, <=, >= rows.

The engine is a first-order operator-splitting method on the homogeneous
self-dual embedding: each iteration alternates a cached affine solve with
projections onto the cones (symmetric eigendecomposition for PSD blocks,
clipping for the orthant).  Infeasibility and unboundedness are certified from
divergence directions.  Everything is deterministic: fixed iteration order, no
randomization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_FEAS_TOL = 1e-8
DEFAULT_GAP_TOL = 1e-8
DEFAULT_MAX_ITER = 50_000

_OVER_RELAX = 1.5
_CHECK_EVERY = 25

_svec_cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _svec_index(d: int):
    """Upper-triangle index arrays and sqrt(2) off-diagonal weights for dim d."""
    if d not in _svec_cache:
        iu, ju = np.triu_indices(d)
        w = np.where(iu == ju, 1.0, np.sqrt(2.0))
        _svec_cache[d] = (iu, ju, w)
    return _svec_cache[d]


def svec(S: np.ndarray) -> np.ndarray:
    """Scaled upper-triangle vectorization: <A, B> = svec(A) . svec(B)."""
    iu, ju, w = _svec_index(S.shape[0])
    return S[iu, ju] * w


def unsvec(v: np.ndarray, d: int) -> np.ndarray:
    iu, ju, w = _svec_index(d)
    S = np.zeros((d, d))
    S[iu, ju] = v / w
    S[ju, iu] = S[iu, ju]
    return S


def _tri(d: int) -> int:
    return d * (d + 1) // 2


def _check_sym(M: np.ndarray, d: int, what: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape != (d, d):
        raise ValueError(f"{what}: expected {d}x{d} matrix, got shape {M.shape}")
    if np.max(np.abs(M - M.T)) > 1e-12 * max(1.0, float(np.max(np.abs(M)))):
        raise ValueError(f"{what}: coefficient matrix must be symmetric")
    return 0.5 * (M + M.T)


@dataclass
class _Row:
    sense: str
    rhs: float
    psd: dict[int, np.ndarray]
    orth: dict[int, float]


class ConicProgram:
    """Block-structured conic program: minimize a linear objective over
    (S_1, ..., S_k, z) with S_i PSD of dimension psd_dims[i] and z >= 0,
    subject to affine rows sum_i <A_i, S_i> + a.z {=, <=, >=} rhs."""

    def __init__(self, psd_dims, orth_dim: int = 0):
        self.psd_dims = tuple(int(d) for d in psd_dims)
        if any(d < 1 for d in self.psd_dims) or orth_dim < 0:
            raise ValueError("block dimensions must be positive")
        self.orth_dim = int(orth_dim)
        self.obj_psd = {i: np.zeros((d, d)) for i, d in enumerate(self.psd_dims)}
        self.obj_orth = np.zeros(self.orth_dim)
        self.rows: list[_Row] = []

    # -- construction -----------------------------------------------------

    def _check_refs(self, psd, orth):
        psd = {} if psd is None else {int(i): m for i, m in psd.items()}
        for i in psd:
            if not 0 <= i < len(self.psd_dims):
                raise ValueError(f"PSD block index {i} out of range")
            psd[i] = _check_sym(psd[i], self.psd_dims[i], f"PSD block {i}")
        if orth is None:
            orth = {}
        elif not isinstance(orth, dict):
            vec = np.asarray(orth, dtype=float)
            if vec.shape != (self.orth_dim,):
                raise ValueError(f"orthant vector must have length {self.orth_dim}")
            orth = {i: float(v) for i, v in enumerate(vec) if v != 0.0}
        else:
            orth = {int(i): float(v) for i, v in orth.items()}
        for i in orth:
            if not 0 <= i < self.orth_dim:
                raise ValueError(f"orthant index {i} out of range")
        return psd, orth

    def set_objective(self, psd=None, orth=None):
        psd, orth = self._check_refs(psd, orth)
        for i, m in psd.items():
            self.obj_psd[i] = m
        self.obj_orth = np.zeros(self.orth_dim)
        for i, v in orth.items():
            self.obj_orth[i] = v

    def add_row(self, sense: str, rhs: float, psd=None, orth=None):
        if sense not in ("=", "<=", ">="):
            raise ValueError(f"sense must be '=', '<=' or '>=', got {sense!r}")
        psd, orth = self._check_refs(psd, orth)
        self.rows.append(_Row(sense, float(rhs), psd, orth))

    # -- canonical data ----------------------------------------------------

    @property
    def n_vars(self) -> int:
        return sum(_tri(d) for d in self.psd_dims) + self.orth_dim

    def _var_offsets(self):
        offs, at = [], 0
        for d in self.psd_dims:
            offs.append(at)
            at += _tri(d)
        return offs, at  # at == start of orthant block

    def _row_vector(self, row: _Row) -> np.ndarray:
        offs, orth0 = self._var_offsets()
        vec = np.zeros(self.n_vars)
        for i, m in row.psd.items():
            vec[offs[i] : offs[i] + _tri(self.psd_dims[i])] = svec(m)
        for i, v in row.orth.items():
            vec[orth0 + i] = v
        return vec

    def objective_vector(self) -> np.ndarray:
        offs, orth0 = self._var_offsets()
        c = np.zeros(self.n_vars)
        for i, m in self.obj_psd.items():
            c[offs[i] : offs[i] + _tri(self.psd_dims[i])] = svec(m)
        c[orth0 :] = self.obj_orth
        return c

    def split_point(self, x: np.ndarray):
        """Split a flat solution vector into (psd matrices, orthant vector)."""
        offs, orth0 = self._var_offsets()
        mats = [unsvec(x[o : o + _tri(d)], d) for o, d in zip(offs, self.psd_dims)]
        return mats, np.array(x[orth0:])

    # -- JSON debug dump ----------------------------------------------------

    def to_debug_json(self) -> str:
        def mat_list(m):
            return [float(v) for v in np.asarray(m).reshape(-1)]

        return json.dumps(
            {
                "psd_dims": list(self.psd_dims),
                "orth_dim": self.orth_dim,
                "objective": {
                    "psd": {str(i): mat_list(m) for i, m in self.obj_psd.items()},
                    "orth": [float(v) for v in self.obj_orth],
                },
                "rows": [
                    {
                        "sense": r.sense,
                        "rhs": r.rhs,
                        "psd": {str(i): mat_list(m) for i, m in r.psd.items()},
                        "orth": {str(i): v for i, v in r.orth.items()},
                    }
                    for r in self.rows
                ],
            }
        )

    @staticmethod
    def from_debug_json(text: str) -> "ConicProgram":
        data = json.loads(text)
        prog = ConicProgram(data["psd_dims"], data["orth_dim"])
        dims = prog.psd_dims

        def mat(i, flat):
            return np.array(flat).reshape(dims[i], dims[i])

        prog.set_objective(
            psd={int(i): mat(int(i), m) for i, m in data["objective"]["psd"].items()},
            orth=np.array(data["objective"]["orth"]),
        )
        for r in data["rows"]:
            prog.add_row(
                r["sense"],
                r["rhs"],
                psd={int(i): mat(int(i), m) for i, m in r["psd"].items()},
                orth={int(i): v for i, v in r["orth"].items()},
            )
        return prog


@dataclass
class SolveOutcome:
    status: str  # optimal | infeasible | unbounded | numerical-failure
    psd_blocks: list[np.ndarray] = field(default_factory=list)
    orth: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None  # one multiplier per constraint row
    pri_res: float = np.inf
    dua_res: float = np.inf
    gap: float = np.inf
    iterations: int = 0


@dataclass
class FeasibilityResult:
    status: str  # feasible | infeasible | undecided
    psd_blocks: list[np.ndarray] | None = None
    orth: np.ndarray | None = None


class _Embedding:
    """Canonical data Ax + s = b, s in K = zero^p x nonneg^q x PSD-blocks,
    plus the cached inverse of the self-dual-embedding linear map.  User rows
    are equilibrated to unit norm (cone-safe: only =, <=, >= rows are scaled);
    duals are mapped back to the original scaling on extraction."""

    def __init__(self, prog: ConicProgram):
        n = prog.n_vars
        eq_idx = [i for i, r in enumerate(prog.rows) if r.sense == "="]
        ineq_idx = [i for i, r in enumerate(prog.rows) if r.sense != "="]
        eq_rows = [prog.rows[i] for i in eq_idx]
        ineq_rows = [prog.rows[i] for i in ineq_idx]
        self.row_order = eq_idx + ineq_idx

        A_rows, b, scales = [], [], []
        for r in eq_rows + ineq_rows:
            sign = -1.0 if r.sense == ">=" else 1.0
            vec = sign * prog._row_vector(r)
            nrm = float(np.linalg.norm(vec))
            scale = 1.0 / nrm if nrm > 1e-12 else 1.0
            A_rows.append(scale * vec)
            b.append(scale * sign * r.rhs)
            scales.append(scale)
        self.row_scales = np.array(scales)
        self.p = len(eq_rows)
        self.q_rows = len(ineq_rows)

        offs, orth0 = prog._var_offsets()
        # orthant membership: -z + s = 0, s >= 0
        for i in range(prog.orth_dim):
            vec = np.zeros(n)
            vec[orth0 + i] = -1.0
            A_rows.append(vec)
            b.append(0.0)
        # PSD membership: -svec(S_i) + s = 0, s in PSD cone
        for o, d in zip(offs, prog.psd_dims):
            block = np.zeros((_tri(d), n))
            block[:, o : o + _tri(d)] = -np.eye(_tri(d))
            A_rows.extend(block)
            b.extend([0.0] * _tri(d))

        self.A = np.array(A_rows) if A_rows else np.zeros((0, n))
        self.b = np.array(b)
        self.c = prog.objective_vector()
        self.n = n
        self.m = self.A.shape[0]
        self.q = self.q_rows + prog.orth_dim
        self.psd_dims = prog.psd_dims
        # slice bookkeeping for the cone projections
        self.psd_slices = []
        at = self.p + self.q
        for d in prog.psd_dims:
            self.psd_slices.append((slice(at, at + _tri(d)), d))
            at += _tri(d)

        N = self.n + self.m + 1
        M = np.eye(N)
        M[: self.n, self.n : -1] += self.A.T
        M[: self.n, -1] += self.c
        M[self.n : -1, : self.n] -= self.A
        M[self.n : -1, -1] += self.b
        M[-1, : self.n] -= self.c
        M[-1, self.n : -1] -= self.b
        self.Minv = np.linalg.inv(M)

    def project_dual_cone_inplace(self, y: np.ndarray) -> None:
        """Project onto K* = free^p x nonneg^q x PSD-blocks, in place."""
        at = self.p
        np.maximum(y[at : at + self.q], 0.0, out=y[at : at + self.q])
        for sl, d in self.psd_slices:
            if d == 1:
                y[sl] = max(y[sl.start], 0.0)
                continue
            S = unsvec(y[sl], d)
            w, U = np.linalg.eigh(S)
            if w[0] < 0.0:
                Up = U * np.maximum(w, 0.0)
                y[sl] = svec(Up @ U.T)

    def dist_to_cone(self, s: np.ndarray) -> float:
        """Euclidean distance of s to K (zero cone included)."""
        gap2 = float(np.dot(s[: self.p], s[: self.p]))
        at = self.p
        neg = np.minimum(s[at : at + self.q], 0.0)
        gap2 += float(np.dot(neg, neg))
        for sl, d in self.psd_slices:
            w = np.linalg.eigvalsh(unsvec(s[sl], d))
            wneg = np.minimum(w, 0.0)
            gap2 += float(np.dot(wneg, wneg))
        return np.sqrt(gap2)


def residual_report(prog: ConicProgram, psd_blocks, orth) -> tuple[float, float]:
    """Worst constraint violation and worst cone violation (negative eigenvalue
    or orthant entry) of a candidate point; independent of solver state."""
    worst_row = 0.0
    for r in prog.rows:
        val = sum(float(np.sum(r.psd[i] * psd_blocks[i])) for i in r.psd)
        val += sum(v * orth[i] for i, v in r.orth.items())
        gap = val - r.rhs
        if r.sense == "=":
            worst_row = max(worst_row, abs(gap))
        elif r.sense == "<=":
            worst_row = max(worst_row, gap)
        else:
            worst_row = max(worst_row, -gap)
    worst_cone = 0.0
    for S in psd_blocks:
        if S.size:
            worst_cone = max(worst_cone, -float(np.linalg.eigvalsh(S)[0]))
    if orth is not None and len(orth):
        worst_cone = max(worst_cone, -float(np.min(orth)))
    return worst_row, worst_cone


def solve(
    prog: ConicProgram,
    feas_tol: float = DEFAULT_FEAS_TOL,
    gap_tol: float = DEFAULT_GAP_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    callback=None,
) -> SolveOutcome:
    """Minimize the program's objective.  Deterministic: identical inputs give
    identical outcomes.

    callback, if given, receives (iterations, xh, pri, dua, gap) at every
    convergence check once a primal candidate exists; returning a truthy value
    stops the solve with status "stopped" and that candidate (used by callers
    whose acceptance test is cheaper than full convergence).
    """
    emb = _Embedding(prog)
    n, m = emb.n, emb.m
    A, b, c = emb.A, emb.b, emb.c
    norm_b, norm_c = np.linalg.norm(b), np.linalg.norm(c)
    Minv = emb.Minv

    u = np.zeros(n + m + 1)
    v = np.zeros(n + m + 1)
    u[-1] = 1.0
    v[-1] = 1.0

    best = None  # (score, xh, yh, ctx, pri, dua, gap, it)
    it = 0
    while it < max_iter:
        steps = min(_CHECK_EVERY, max_iter - it)
        for _ in range(steps):
            ut = Minv @ (u + v)
            ut *= _OVER_RELAX
            ut += (1.0 - _OVER_RELAX) * u
            w = ut - v
            # projection onto R^n x K* x R+
            emb.project_dual_cone_inplace(w[n:-1])
            if w[-1] < 0.0:
                w[-1] = 0.0
            v += w
            v -= ut
            u = w
        it += steps

        x, y, tau = u[:n], u[n:-1], u[-1]
        s = v[n:-1]
        if tau > 1e-11:
            xh, yh, sh = x / tau, y / tau, s / tau
            ctx, bty = float(c @ xh), float(b @ yh)
            pri = float(np.linalg.norm(A @ xh + sh - b)) / (1.0 + norm_b)
            dua = float(np.linalg.norm(A.T @ yh + c)) / (1.0 + norm_c)
            gap = abs(ctx + bty) / (1.0 + abs(ctx) + abs(bty))
            if pri <= feas_tol and dua <= feas_tol and gap <= gap_tol:
                mats, orth = prog.split_point(xh)
                duals = _map_duals(emb, yh, len(prog.rows))
                return SolveOutcome("optimal", mats, orth, ctx, duals, pri, dua, gap, it)
            if callback is not None and callback(it, xh, pri, dua, gap):
                mats, orth = prog.split_point(xh)
                duals = _map_duals(emb, yh, len(prog.rows))
                return SolveOutcome("stopped", mats, orth, ctx, duals, pri, dua, gap, it)
            if best is None or pri + dua + gap < best[0]:
                best = (pri + dua + gap, xh, yh, ctx, pri, dua, gap, it)
        # certificates of infeasibility / unboundedness from divergence direction
        bty = float(b @ y)
        if bty < -1e-12:
            yc = y / (-bty)
            if np.linalg.norm(A.T @ yc) <= feas_tol * (1.0 + np.linalg.norm(yc)):
                return SolveOutcome("infeasible", iterations=it)
        ctx = float(c @ x)
        if ctx < -1e-12:
            xc = x / (-ctx)
            sc = -A @ xc
            if emb.dist_to_cone(sc) <= feas_tol * (1.0 + np.linalg.norm(xc)):
                return SolveOutcome("unbounded", iterations=it)

    if best is not None:
        _, xh, yh, ctx, pri, dua, gap, bit = best
        mats, orth = prog.split_point(xh)
        duals = _map_duals(emb, yh, len(prog.rows))
        return SolveOutcome("numerical-failure", mats, orth, ctx, duals, pri, dua, gap, bit)
    return SolveOutcome("numerical-failure", iterations=it)


def _map_duals(emb: _Embedding, yh: np.ndarray, n_rows: int) -> np.ndarray:
    """Duals for the user's rows in their original order and scaling
    (membership rows are internal)."""
    duals = np.zeros(n_rows)
    for pos, orig in enumerate(emb.row_order):
        duals[orig] = yh[pos] * emb.row_scales[pos]
    return duals


def feasibility(prog: ConicProgram, feas_tol: float = DEFAULT_FEAS_TOL,
                max_iter: int = DEFAULT_MAX_ITER) -> FeasibilityResult:
    """Phase decision for a program with zero objective.

    feasible requires a point whose rows hold within tolerance and whose blocks
    have min eigenvalue >= -1e-9 before clipping; infeasible requires a
    certified separating direction; anything else is undecided (bisection
    treats undecided as infeasible and logs it).
    """
    out = solve(prog, feas_tol=feas_tol, gap_tol=np.inf, max_iter=max_iter)
    if out.status == "optimal":
        worst_row, worst_cone = residual_report(prog, out.psd_blocks, out.orth)
        if worst_row <= 10.0 * feas_tol and worst_cone <= 1e-9:
            clipped = [psd_clip(S) for S in out.psd_blocks]
            orth = np.maximum(out.orth, 0.0) if out.orth is not None else None
            return FeasibilityResult("feasible", clipped, orth)
        return FeasibilityResult("undecided")
    if out.status == "infeasible":
        return FeasibilityResult("infeasible")
    return FeasibilityResult("undecided")


def psd_clip(S: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix (negative eigenvalues clipped)."""
    w, U = np.linalg.eigh(0.5 * (S + S.T))
    if w[0] >= 0.0:
        return S
    return (U * np.maximum(w, 0.0)) @ U.T
