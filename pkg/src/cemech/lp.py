"""Linear programs of the form  max c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0.

Two backends share one certificate check:

* ``"simplex"``: a dense two-phase tableau simplex (Dantzig pricing, Bland's
  rule after a run of degenerate pivots). The final basis is re-solved from
  the original data and the dual vector is read off the same basis.
* ``"highs"``: scipy's HiGHS interface, for the large sparse programs that
  the dense tableau cannot hold.

``"auto"`` picks the simplex while the tableau stays small.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9
GAP_TOL = 1e-8
DENSE_LIMIT = 4_000_000  # tableau cells


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded" | "iteration_limit"
    value: float = float("nan")
    x: np.ndarray | None = None
    y_ub: np.ndarray | None = None
    y_eq: np.ndarray | None = None
    backend: str = ""
    iterations: int = 0
    certificate: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return bool(self.certificate.get("certified", False))


class LPError(RuntimeError):
    pass


def _as_dense(A, n):
    if A is None:
        return np.zeros((0, n))
    return A.toarray() if sparse.issparse(A) else np.asarray(A, dtype=float).reshape(-1, n)


def certify(c, A_ub, b_ub, A_eq, b_eq, x, y_ub, y_eq, feas_tol=FEAS_TOL, gap_tol=GAP_TOL) -> dict:
    """Primal feasibility, dual feasibility and duality gap of a claimed optimum."""
    c = np.asarray(c, float)
    r_ub = (A_ub @ x - b_ub) if A_ub is not None and A_ub.shape[0] else np.zeros(0)
    r_eq = (A_eq @ x - b_eq) if A_eq is not None and A_eq.shape[0] else np.zeros(0)
    primal = max([0.0, float(-x.min()) if x.size else 0.0,
                  float(r_ub.max()) if r_ub.size else 0.0,
                  float(np.abs(r_eq).max()) if r_eq.size else 0.0])
    red = -c.copy()
    if A_ub is not None and A_ub.shape[0]:
        red = red + A_ub.T @ y_ub
    if A_eq is not None and A_eq.shape[0]:
        red = red + A_eq.T @ y_eq
    dual = max([0.0, float(-red.min()) if red.size else 0.0,
                float(-y_ub.min()) if y_ub is not None and y_ub.size else 0.0])
    dual_obj = (float(b_ub @ y_ub) if y_ub is not None and y_ub.size else 0.0) + \
               (float(b_eq @ y_eq) if y_eq is not None and y_eq.size else 0.0)
    gap = abs(float(c @ x) - dual_obj)
    return {
        "primal_residual": primal,
        "dual_residual": dual,
        "duality_gap": gap,
        "dual_objective": dual_obj,
        "certified": primal <= feas_tol and dual <= feas_tol and gap <= gap_tol,
    }


def lp_solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, backend: str = "auto",
             max_iter: int = 50_000) -> LPResult:
    """Maximise ``c.x`` over the polyhedron; see module docstring for the form."""
    c = np.asarray(c, dtype=float)
    n = c.size
    if A_ub is not None and not sparse.issparse(A_ub):
        A_ub = np.asarray(A_ub, dtype=float).reshape(-1, n)
    if A_eq is not None and not sparse.issparse(A_eq):
        A_eq = np.asarray(A_eq, dtype=float).reshape(-1, n)
    m_ub = 0 if A_ub is None else A_ub.shape[0]
    m_eq = 0 if A_eq is None else A_eq.shape[0]
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float)
    if backend == "auto":
        backend = "simplex" if (m_ub + m_eq + 1) * (n + 2 * m_ub + m_eq + 1) <= DENSE_LIMIT else "highs"
    if backend == "simplex":
        res = _dense_simplex(c, _as_dense(A_ub, n), b_ub, _as_dense(A_eq, n), b_eq, max_iter)
    elif backend == "highs":
        res = _highs(c, A_ub, b_ub, A_eq, b_eq)
    else:
        raise ValueError(f"unknown LP backend {backend!r}")
    if res.status == "optimal":
        res.certificate = certify(c, A_ub if m_ub else None, b_ub, A_eq if m_eq else None, b_eq,
                                  res.x, res.y_ub, res.y_eq)
    return res


# -- HiGHS ----------------------------------------------------------------------

def _highs(c, A_ub, b_ub, A_eq, b_eq) -> LPResult:
    from scipy.optimize import linprog

    kw = {}
    if A_ub is not None and A_ub.shape[0]:
        kw.update(A_ub=A_ub, b_ub=b_ub)
    if A_eq is not None and A_eq.shape[0]:
        kw.update(A_eq=A_eq, b_eq=b_eq)
    r = linprog(-c, bounds=(0, None), method="highs", **kw)
    status = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded"}.get(r.status, "error")
    if status != "optimal":
        return LPResult(status, backend="highs")
    y_ub = -np.asarray(r.ineqlin.marginals) if "A_ub" in kw else np.zeros(0)
    y_eq = -np.asarray(r.eqlin.marginals) if "A_eq" in kw else np.zeros(0)
    return LPResult("optimal", float(c @ r.x), np.asarray(r.x), y_ub, y_eq, "highs", int(r.nit))


# -- dense two-phase simplex ------------------------------------------------------

def _pivot(T, r, e):
    T[r] /= T[r, e]
    col = T[:, e].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run(T, basis, cost, max_iter, tol=1e-9):
    """Primal simplex on tableau ``T`` (last column rhs) maximising ``cost`` over its columns."""
    m = T.shape[0]
    degenerate = 0
    bland = False
    for it in range(max_iter):
        rc = cost - cost[basis] @ T[:, :-1]
        if bland:
            cand = np.flatnonzero(rc > 1e-9)
            if cand.size == 0:
                return "optimal", it
            e = int(cand[0])
        else:
            e = int(np.argmax(rc))
            if rc[e] <= 1e-9:
                return "optimal", it
        col = T[:, e]
        pos = col > tol
        if not pos.any():
            return "unbounded", it
        ratios = np.full(m, np.inf)
        ratios[pos] = T[pos, -1] / col[pos]
        rmin = ratios.min()
        ties = np.flatnonzero(ratios <= rmin + 1e-12)
        if bland:
            r = int(ties[np.argmin(basis[ties])])
        else:
            # largest pivot among ties keeps the tableau well conditioned
            r = int(ties[np.argmax(col[ties])])
        _pivot(T, r, e)
        basis[r] = e
        if rmin <= 1e-12:
            degenerate += 1
            if degenerate > 50:
                bland = True
        else:
            degenerate = 0
            bland = False
    return "iteration_limit", max_iter


def _dense_simplex(c, A_ub, b_ub, A_eq, b_eq, max_iter) -> LPResult:
    n = c.size
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq
    # standard form S z = b with z = (x, slacks); original orientation kept for duals
    S = np.zeros((m, n + m_ub))
    S[:m_ub, :n] = A_ub
    S[:m_ub, n:] = np.eye(m_ub)
    S[m_ub:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    sign = np.where(b < 0, -1.0, 1.0)
    Sf = S * sign[:, None]
    bf = b * sign
    # artificial for every row lacking a usable slack
    need_art = [k for k in range(m) if k >= m_ub or sign[k] < 0]
    n_std = n + m_ub
    T = np.zeros((m, n_std + len(need_art) + 1))
    T[:, :n_std] = Sf
    T[:, -1] = bf
    basis = np.empty(m, dtype=int)
    art_cols = []
    for a, k in enumerate(need_art):
        col = n_std + a
        T[k, col] = 1.0
        basis[k] = col
        art_cols.append(col)
    for k in range(m_ub):
        if sign[k] > 0:
            basis[k] = n + k
    iters = 0
    if art_cols:
        cost1 = np.zeros(T.shape[1] - 1)
        cost1[art_cols] = -1.0
        status, it = _run(T, basis, cost1, max_iter)
        iters += it
        if status == "iteration_limit":
            return LPResult(status, backend="simplex", iterations=iters)
        infeas = float(T[np.isin(basis, art_cols), -1].sum())
        if infeas > 1e-9 * max(1.0, np.abs(bf).max(initial=0.0)):
            return LPResult("infeasible", backend="simplex", iterations=iters)
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] in art_cols:
                row = np.abs(T[r, :n_std])
                j = int(np.argmax(row))
                if row[j] > 1e-9:
                    _pivot(T, r, j)
                    basis[r] = j
                else:
                    keep[r] = False
        T = np.delete(T[keep], art_cols, axis=1)
        basis = basis[keep]
        kept_rows = np.flatnonzero(keep)
    else:
        T = np.delete(T, art_cols, axis=1)
        kept_rows = np.arange(m)
    cost2 = np.zeros(n_std)
    cost2[:n] = c
    status, it = _run(T, basis, cost2, max_iter)
    iters += it
    if status != "optimal":
        return LPResult(status, backend="simplex", iterations=iters)
    # re-solve the final basis from the original data
    B = S[kept_rows][:, basis]
    zb = np.linalg.solve(B, b[kept_rows])
    z = np.zeros(n_std)
    z[basis] = zb
    x = np.clip(z[:n], 0.0, None)
    y_kept = np.linalg.solve(B.T, cost2[basis])
    y = np.zeros(m)
    y[kept_rows] = y_kept
    return LPResult("optimal", float(c @ x), x, y[:m_ub], y[m_ub:], "simplex", iters)
