"""Assembly and deterministic solution of the layout-optimization LP.

The program minimizes the dissipation  sum_i ce_i (p_i+ + p_i-)  subject to

  * per-node compatibility rows coupling the jump vectors of all incident
    candidates (2 rows per node),
  * the Mohr-Coulomb flow-rule rows linking each inner candidate's jumps to
    its nonnegative plastic multipliers (2 rows per inner candidate),
  * a single unit-virtual-work row  G . zeta = 1  that normalizes the
    driving work, so the optimal objective is the factor of safety.

Variables are ordered [zeta_t, zeta_n] per candidate followed by [p+, p-]
per inner candidate.  Jump components of boundary candidates are pinned to
zero according to their tag: fixed pins both, roller_n pins the normal
component, roller_t the tangential one.

Two interchangeable backends solve the program: "highs" (scipy's HiGHS dual
simplex; the default) and "simplex" (a dense two-phase tableau solver with
Bland anti-cycling, intended for small instances and cross-checking).  Both
run behind the same presolve + powers-of-two equilibration, so results are
reproducible bit for bit across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .candidates import Candidate


class LpError(RuntimeError):
    pass


class StructurallyStable(Exception):
    """No inner candidate does nonzero virtual work: no LP can be posed and
    the snapshot admits no driven mechanism at all."""


DEFAULT_PIN_MAP = {"fixed": "tn", "roller_n": "n", "roller_t": "t",
                   "free": "", "loaded": ""}


@dataclass
class LinearProgram:
    """Equality-constrained LP over (zeta, p) with nonnegative p."""

    objective: np.ndarray
    eq_matrix: sp.csr_matrix
    eq_rhs: np.ndarray
    nonneg_mask: np.ndarray
    pinned: np.ndarray
    n_nodes: int
    n_candidates: int
    inner_idx: np.ndarray

    @property
    def n_vars(self) -> int:
        return len(self.objective)

    def zeta_cols(self, cand_index: int) -> tuple:
        return 2 * cand_index, 2 * cand_index + 1

    def p_cols(self, inner_pos: int) -> tuple:
        base = 2 * self.n_candidates
        return base + 2 * inner_pos, base + 2 * inner_pos + 1


@dataclass
class LpSolution:
    status: str                    # "optimal" | "infeasible"
    objective_value: float
    zeta: np.ndarray               # (n_candidates, 2)
    p: np.ndarray                  # (n_inner, 2)
    iterations: int = 0
    solver: str = ""
    message: str = ""


def compatibility_block(t_away: np.ndarray) -> np.ndarray:
    """2x2 block mapping a candidate's (zeta_t, zeta_n) to its global jump
    vector, with the tangent oriented away from the node."""
    tx, ty = t_away
    return np.array([[tx, -ty], [ty, tx]])


def flow_block(tan_phi: float) -> np.ndarray:
    """2x4 flow-rule block over (zeta_t, zeta_n, p+, p-)."""
    return np.array([[1.0, 0.0, -1.0, 1.0],
                     [0.0, -1.0, tan_phi, tan_phi]])


def compatibility_rows(node: int, incident: list, n_candidates: int):
    """Sparse (cols, 2xK block) data for one node's two compatibility rows.

    ``incident`` holds (candidate_index, candidate) pairs; the stored tangent
    is negated when the node is the candidate's higher-numbered end.
    """
    cols = []
    vals = []
    for idx, cand in incident:
        sign = 1.0 if node == cand.a else -1.0
        blk = compatibility_block(sign * cand.t)
        cols.extend((2 * idx, 2 * idx + 1))
        vals.append(blk)
    if not vals:
        return np.empty(0, dtype=np.int64), np.zeros((2, 0))
    return np.array(cols, dtype=np.int64), np.hstack(vals)


def assemble_lp(mesh, candidates: list, pin_map: dict | None = None) -> LinearProgram:
    """Build the full program from classified candidates with coefficients.

    Raises StructurallyStable when the unit-work row would be identically
    zero (no inner candidate carries nonzero work coefficients).
    """
    pin_map = dict(DEFAULT_PIN_MAP, **(pin_map or {}))
    n_nodes = len(mesh.nodes)
    nc = len(candidates)
    inner_idx = np.array([i for i, c in enumerate(candidates) if c.kind == "inner"],
                         dtype=np.int64)
    ni = len(inner_idx)
    n_vars = 2 * nc + 2 * ni
    n_rows = 2 * n_nodes + 2 * ni + 1

    rows, cols, vals = [], [], []

    incident: dict[int, list] = {}
    for i, c in enumerate(candidates):
        incident.setdefault(c.a, []).append((i, c))
        incident.setdefault(c.b, []).append((i, c))
    for node, inc in incident.items():
        ccols, block = compatibility_rows(node, inc, nc)
        for r in range(2):
            rows.extend([2 * node + r] * len(ccols))
            cols.extend(ccols)
            vals.extend(block[r])

    for j, i in enumerate(inner_idx):
        c = candidates[i]
        blk = flow_block(c.tan_phi)
        bcols = [2 * i, 2 * i + 1, 2 * nc + 2 * j, 2 * nc + 2 * j + 1]
        for r in range(2):
            rows.extend([2 * n_nodes + 2 * j + r] * 4)
            cols.extend(bcols)
            vals.extend(blk[r])

    work_row = n_rows - 1
    any_g = False
    for j, i in enumerate(inner_idx):
        c = candidates[i]
        if c.G_t != 0.0:
            rows.append(work_row)
            cols.append(2 * i)
            vals.append(c.G_t)
            any_g = True
        if c.G_n != 0.0:
            rows.append(work_row)
            cols.append(2 * i + 1)
            vals.append(c.G_n)
            any_g = True
    if not any_g:
        raise StructurallyStable("all work coefficients vanish; no mechanism can be driven")

    A = sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_vars)).tocsr()
    b = np.zeros(n_rows)
    b[work_row] = 1.0

    obj = np.zeros(n_vars)
    for j, i in enumerate(inner_idx):
        obj[2 * nc + 2 * j] = candidates[i].ce
        obj[2 * nc + 2 * j + 1] = candidates[i].ce

    nonneg = np.zeros(n_vars, dtype=bool)
    nonneg[2 * nc:] = True

    pinned = np.zeros(n_vars, dtype=bool)
    for i, c in enumerate(candidates):
        if c.kind == "boundary":
            comps = pin_map.get(c.tag, "")
            if "t" in comps:
                pinned[2 * i] = True
            if "n" in comps:
                pinned[2 * i + 1] = True

    return LinearProgram(objective=obj, eq_matrix=A, eq_rhs=b, nonneg_mask=nonneg,
                         pinned=pinned, n_nodes=n_nodes, n_candidates=nc,
                         inner_idx=inner_idx)


# -- presolve and scaling -----------------------------------------------------

@dataclass
class _Reduced:
    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    nonneg: np.ndarray
    keep_cols: np.ndarray
    infeasible_row: bool = False


def _presolve(lp: LinearProgram) -> _Reduced:
    """Drop pinned variables, empty rows/columns and exact duplicate rows."""
    A = lp.eq_matrix.tocsc()
    keep_cols = np.nonzero(~lp.pinned)[0]
    A = A[:, keep_cols]
    c = lp.objective[keep_cols]
    nonneg = lp.nonneg_mask[keep_cols]
    b = lp.eq_rhs.copy()

    A = A.tocsr()
    A.eliminate_zeros()
    row_nnz = np.diff(A.indptr)
    infeasible = bool(np.any((row_nnz == 0) & (np.abs(b) > 0)))
    keep_rows = row_nnz > 0

    # Exact duplicate rows (identical sparsity and values, same rhs).
    seen: dict = {}
    indptr, indices, data = A.indptr, A.indices, A.data
    for r in np.nonzero(keep_rows)[0]:
        sig = (indices[indptr[r]:indptr[r + 1]].tobytes(),
               data[indptr[r]:indptr[r + 1]].tobytes(), float(b[r]))
        if sig in seen:
            keep_rows[r] = False
        else:
            seen[sig] = r

    A = A[keep_rows]
    b = b[keep_rows]

    # Columns that no longer touch any row: zetas are free and costless, so
    # zero is canonical; ps have nonnegative cost, so zero is optimal.
    col_nnz = np.diff(A.tocsc().indptr)
    live = col_nnz > 0
    A = A.tocsc()[:, live].tocsr()
    c = c[live]
    nonneg = nonneg[live]
    keep_cols = keep_cols[live]
    return _Reduced(A=A, b=b, c=c, nonneg=nonneg, keep_cols=keep_cols,
                    infeasible_row=infeasible)


def _pow2_scale(values: np.ndarray) -> np.ndarray:
    """Nearest power of two to 1/values (exactly representable scaling)."""
    out = np.ones_like(values)
    pos = values > 0
    out[pos] = np.exp2(-np.round(np.log2(values[pos])))
    return out


def _equilibrate(A: sp.csr_matrix, b: np.ndarray, c: np.ndarray, sweeps: int = 3):
    """Iterative row/column inf-norm scaling with power-of-two factors.

    Scaling by powers of two is exact in binary floating point, so the
    unscaled solution suffers no rounding from the equilibration itself.
    """
    m, n = A.shape
    dr = np.ones(m)
    dc = np.ones(n)
    As = A.copy().astype(float)
    for _ in range(sweeps):
        row_max = np.maximum.reduceat(
            np.abs(As.data), As.indptr[:-1], dtype=float) if As.nnz else np.ones(m)
        row_max = np.where(np.diff(As.indptr) > 0, row_max, 1.0)
        r = _pow2_scale(row_max)
        As = sp.diags(r) @ As
        dr *= r
        csc = As.tocsc()
        col_max = np.maximum.reduceat(
            np.abs(csc.data), csc.indptr[:-1], dtype=float) if csc.nnz else np.ones(n)
        col_max = np.where(np.diff(csc.indptr) > 0, col_max, 1.0)
        s = _pow2_scale(col_max)
        As = (csc @ sp.diags(s)).tocsr()
        dc *= s
    return As, dr * b, c * dc, dr, dc


# -- backends -----------------------------------------------------------------

def _solve_highs(A: sp.csr_matrix, b: np.ndarray, c: np.ndarray, nonneg: np.ndarray):
    from scipy.optimize import linprog

    bounds = [(0, None) if nn else (None, None) for nn in nonneg]
    res = linprog(c, A_eq=A, b_eq=b, bounds=bounds, method="highs-ds",
                  options={"presolve": True,
                           "primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    status = {0: "optimal", 1: "iteration_limit", 2: "infeasible",
              3: "unbounded", 4: "numerical"}.get(res.status, "error")
    x = res.x if res.x is not None else np.zeros(A.shape[1])
    return status, np.asarray(x, dtype=float), int(res.nit), res.message


def _solve_simplex(A: sp.csr_matrix, b: np.ndarray, c: np.ndarray, nonneg: np.ndarray,
                   max_iter: int | None = None):
    """Dense two-phase primal simplex; free variables split into differences."""
    m = A.shape[0]
    Ad = A.toarray()
    # column k of the original maps to split columns col_map[k] (+) and, for
    # free variables, col_map[k] + 1 (-)
    cols = []
    col_map = np.zeros(A.shape[1], dtype=np.int64)
    cs = []
    for k in range(A.shape[1]):
        col_map[k] = len(cols)
        cols.append(Ad[:, k])
        cs.append(c[k])
        if not nonneg[k]:
            cols.append(-Ad[:, k])
            cs.append(-c[k])
    As = np.column_stack(cols) if cols else np.zeros((m, 0))
    cs = np.array(cs)
    xs, status, nit = _simplex_standard_form(As, b.copy(), cs, max_iter=max_iter)
    if status != "optimal":
        return status, np.zeros(A.shape[1]), nit, status
    x = np.zeros(A.shape[1])
    for k in range(A.shape[1]):
        if nonneg[k]:
            x[k] = xs[col_map[k]]
        else:
            x[k] = xs[col_map[k]] - xs[col_map[k] + 1]
    return "optimal", x, nit, ""


def _simplex_standard_form(A: np.ndarray, b: np.ndarray, c: np.ndarray,
                           max_iter: int | None = None):
    """min c.x s.t. Ax = b, x >= 0 by the full-tableau method.

    The reduced-cost row rides along in the tableau and is updated by the
    pivots.  Dantzig pricing with lowest-index tie-breaks; after a streak of
    degenerate pivots the pricing falls back to Bland's rule, which cannot
    cycle.  Deterministic by construction.
    """
    m, n = A.shape
    neg = b < 0
    A = A.copy()
    A[neg] *= -1.0
    b = np.where(neg, -b, b)
    if max_iter is None:
        max_iter = 500 * (m + n + 10)

    tol = 1e-9 * max(1.0, float(np.abs(A).max() if A.size else 1.0))
    rtol = 1e-11

    # tableau rows 0..m-1: [B^-1 A, B^-1 I_art | B^-1 b]; row m: reduced costs
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    basis = np.arange(n, n + m)
    total_iter = 0

    def pivot(r: int, j: int) -> None:
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T[...] = T - np.outer(col, T[r])
        basis[r] = j

    def run_phase(ncols: int):
        nonlocal total_iter
        bland = False
        degen_streak = 0
        while True:
            if total_iter > max_iter:
                raise LpError("simplex iteration limit exceeded")
            red = T[m, :ncols]
            if bland:
                enterable = np.nonzero(red < -tol)[0]
                if len(enterable) == 0:
                    return "optimal"
                j = int(enterable[0])
            else:
                j = int(np.argmin(red))
                if red[j] >= -tol:
                    return "optimal"
            col = T[:m, j]
            pos = col > tol
            if not np.any(pos):
                return "unbounded"
            ratios = np.full(m, np.inf)
            ratios[pos] = T[:m, -1][pos] / col[pos]
            rmin = ratios.min()
            ties = np.nonzero(ratios <= rmin + 1e-10 * (1.0 + abs(rmin)))[0]
            r = int(ties[np.argmin(basis[ties])])
            pivot(r, j)
            if rmin <= rtol:
                degen_streak += 1
                if degen_streak > 40:
                    bland = True
            else:
                degen_streak = 0
                bland = False
            total_iter += 1

    # phase 1: minimize the sum of artificials; their reduced costs start at
    # zero by subtracting every constraint row from the cost row
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    status = run_phase(n + m)
    if status != "optimal":
        raise LpError("phase-1 simplex reported unbounded (internal error)")
    art_level = -float(T[m, -1])
    if art_level > 1e-7 * max(1.0, float(np.abs(b).max())):
        return np.zeros(n), "infeasible", total_iter

    # Drive leftover zero-level artificials out of the basis where possible;
    # rows where no structural column can pivot are redundant.
    drop_rows = []
    for r in range(m):
        if basis[r] >= n:
            cand = np.nonzero(np.abs(T[r, :n]) > tol)[0]
            if len(cand) == 0:
                drop_rows.append(r)
            else:
                pivot(r, int(cand[0]))
    if drop_rows:
        keep = np.array([r for r in range(m) if r not in set(drop_rows)] + [m],
                        dtype=int)
        T = T[keep]
        basis = basis[np.array([r for r in range(m) if r not in set(drop_rows)],
                               dtype=int)]
        m = len(basis)

    T[:, n:-1] = 0.0  # artificial columns must never pivot back in
    T[m, :n] = c - c[basis] @ T[:m, :n]
    T[m, -1] = -float(c[basis] @ T[:m, -1])
    status = run_phase(n)
    if status == "unbounded":
        return np.zeros(n), "unbounded", total_iter
    x = np.zeros(n)
    for r, bv in enumerate(basis):
        if bv < n:
            x[bv] = T[r, -1]
    return x, "optimal", total_iter


_BACKENDS = {"highs": _solve_highs, "simplex": _solve_simplex}


def register_solver(name: str, fn) -> None:
    """Register an external backend: fn(A, b, c, nonneg) -> (status, x, nit, msg)."""
    _BACKENDS[name] = fn


def solve_lp(lp: LinearProgram, solver: str = "highs") -> LpSolution:
    """Presolve, equilibrate, dispatch to a backend and map the solution back.

    Returns status "optimal" or "infeasible"; an "unbounded" report is an
    internal error because the objective is bounded below by zero.
    """
    if solver not in _BACKENDS:
        raise LpError(f"unknown solver {solver!r}; registered: {sorted(_BACKENDS)}")
    red = _presolve(lp)
    nc, ni = lp.n_candidates, len(lp.inner_idx)
    if red.infeasible_row:
        return LpSolution(status="infeasible", objective_value=float("nan"),
                          zeta=np.zeros((nc, 2)), p=np.zeros((ni, 2)), solver=solver,
                          message="zero row with nonzero right-hand side")

    As, bs, cs, dr, dc = _equilibrate(red.A, red.b, red.c)
    status, xs, nit, msg = _BACKENDS[solver](As, bs, cs, red.nonneg)

    if status == "infeasible":
        return LpSolution(status="infeasible", objective_value=float("nan"),
                          zeta=np.zeros((nc, 2)), p=np.zeros((ni, 2)),
                          iterations=nit, solver=solver, message=msg)
    if status == "unbounded":
        raise LpError("solver reported an unbounded program; the dissipation "
                      "objective is bounded below by zero, so this is an internal error")
    if status != "optimal":
        raise LpError(f"LP solve failed ({status}): {msg}")

    x_red = dc * xs
    # Snap round-off negatives on the nonnegative variables to exact zero.
    snap = red.nonneg & (x_red < 0) & (x_red > -1e-12 * max(1.0, float(np.abs(x_red).max())))
    x_red[snap] = 0.0
    x_red = _polish(red, x_red)

    x = np.zeros(lp.n_vars)
    x[red.keep_cols] = x_red
    zeta = x[:2 * nc].reshape(nc, 2).copy()
    p = x[2 * nc:].reshape(ni, 2).copy()
    objective = float(lp.objective @ x)
    return LpSolution(status="optimal", objective_value=objective, zeta=zeta, p=p,
                      iterations=nit, solver=solver, message=msg)


def _polish(red: _Reduced, x: np.ndarray) -> np.ndarray:
    """One least-squares correction on the solution support when the backend
    returns residuals above the feasibility contract."""
    r = red.b - red.A @ x
    scale = max(1.0, float(np.abs(red.b).max()))
    if np.abs(r).max() <= 1e-10 * scale:
        return x
    support = (np.abs(x) > 0) | ~red.nonneg
    idx = np.nonzero(support)[0]
    if len(idx) == 0:
        return x
    As = red.A.tocsc()[:, idx]
    fix = spla.lsqr(As, r, atol=1e-14, btol=1e-14, iter_lim=10 * As.shape[0])[0]
    x2 = x.copy()
    x2[idx] += fix
    x2[red.nonneg & (x2 < 0) & (x2 > -1e-11 * scale)] = 0.0
    if np.abs(red.b - red.A @ x2).max() < np.abs(r).max():
        return x2
    return x


def solution_residuals(candidates: list, n_nodes: int, sol: LpSolution) -> dict:
    """Feasibility residuals recomputed directly from the candidate data.

    Independent of the assembled matrix so it doubles as an oracle: per-node
    compatibility sums, flow-rule blocks, the unit-work row and the
    complementarity products of the plastic multipliers.
    """
    zeta, p = sol.zeta, sol.p
    inner = [i for i, c in enumerate(candidates) if c.kind == "inner"]
    compat = np.zeros((n_nodes, 2))
    for i, c in enumerate(candidates):
        for node, sign in ((c.a, 1.0), (c.b, -1.0)):
            blk = compatibility_block(sign * c.t)
            compat[node] += blk @ zeta[i]
    flow = np.zeros((len(inner), 2))
    comp_prod = np.zeros(len(inner))
    work = 0.0
    for j, i in enumerate(inner):
        c = candidates[i]
        flow[j, 0] = zeta[i, 0] - p[j, 0] + p[j, 1]
        flow[j, 1] = -zeta[i, 1] + c.tan_phi * (p[j, 0] + p[j, 1])
        comp_prod[j] = p[j, 0] * p[j, 1] if c.ce > 0 else 0.0
        work += c.G_t * zeta[i, 0] + c.G_n * zeta[i, 1]
    dE = float(sum(candidates[i].ce * (p[j, 0] + p[j, 1]) for j, i in enumerate(inner)))
    zscale = max(float(np.abs(zeta).max(initial=0.0)), float(np.abs(p).max(initial=0.0)), 1e-300)
    return {
        "compat_inf": float(np.abs(compat).max(initial=0.0)),
        "flow_inf": float(np.abs(flow).max(initial=0.0)),
        "scale": zscale,
        "work": float(work),
        "work_err": abs(work - 1.0),
        "min_p": float(p.min(initial=0.0)),
        "complementarity": float(comp_prod.max(initial=0.0)),
        "dissipation": dE,
    }


def write_mps(lp: LinearProgram, path) -> None:
    """Dump the program in free MPS format for cross-checking with external
    solvers.  Pinned variables are emitted as fixed-at-zero bounds."""
    A = lp.eq_matrix.tocsc()
    with open(path, "w") as fh:
        fh.write("NAME VDLO\nROWS\n N COST\n")
        for r in range(A.shape[0]):
            fh.write(f" E R{r}\n")
        fh.write("COLUMNS\n")
        indptr, indices, data = A.indptr, A.indices, A.data
        for j in range(A.shape[1]):
            if lp.objective[j] != 0.0:
                fh.write(f" X{j} COST {lp.objective[j]!r}\n")
            for k in range(indptr[j], indptr[j + 1]):
                fh.write(f" X{j} R{indices[k]} {data[k]!r}\n")
        fh.write("RHS\n")
        for r in range(A.shape[0]):
            if lp.eq_rhs[r] != 0.0:
                fh.write(f" RHS R{r} {lp.eq_rhs[r]!r}\n")
        fh.write("BOUNDS\n")
        for j in range(A.shape[1]):
            if lp.pinned[j]:
                fh.write(f" FX BND X{j} 0.0\n")
            elif not lp.nonneg_mask[j]:
                fh.write(f" FR BND X{j}\n")
        fh.write("ENDATA\n")
