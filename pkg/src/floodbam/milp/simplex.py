"""Bounded-variable revised simplex.

Every row gets a slack column (``A x + s = b``) whose bounds encode the
row sense; rows that are infeasible at the starting point also get an
artificial column, and phase 1 minimises the artificial sum. The basis is
kept as a sparse LU factorisation plus a product-form eta file that is
refactorised every ``REFACTOR_EVERY`` pivots.

Dantzig pricing is used until a run of degenerate pivots is detected, at
which point the solver falls back to Bland's rule (lowest index entering,
lowest index leaving) until progress resumes, so results are deterministic
and cycling cannot occur.

If accumulated round-off ever leaves a singular basis, the solve is
repeated once from scratch with a stricter pivot tolerance and more
frequent refactorisation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import EQ, GE, LE, MilpModel

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 20
STRICT_PIVOT_TOL = 1e-7
STRICT_REFACTOR_EVERY = 5
DEGENERATE_RUN = 30

_AT_LOWER, _AT_UPPER, _FREE, _BASIC = 0, 1, 2, 3


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LpResult:
    status: LpStatus
    objective: float = float("nan")
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    iterations: int = 0
    primal_violation: float = float("nan")
    duality_gap: float = float("nan")

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Basis:
    """LU of the basis matrix plus an eta file."""

    def __init__(self, cols: sp.csc_matrix, head: np.ndarray):
        self.cols = cols
        self.m = cols.shape[0]
        self.refactor(head)

    def refactor(self, head: np.ndarray) -> None:
        B = self.cols[:, head].tocsc()
        try:
            self.lu = spla.splu(B, permc_spec="COLAMD", options={"SymmetricMode": False})
        except RuntimeError as exc:  # singular basis
            raise np.linalg.LinAlgError(str(exc)) from exc
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        v = self.lu.solve(a)
        for r, wr, idx, val in self.etas:
            vr = v[r] / wr
            v[idx] -= vr * val
            v[r] = vr
        return v

    def btran(self, c: np.ndarray) -> np.ndarray:
        u = c.copy()
        for r, wr, idx, val in reversed(self.etas):
            u[r] = (u[r] - u[idx] @ val) / wr
        return self.lu.solve(u, trans="T")

    def push(self, r: int, w: np.ndarray) -> None:
        # only the off-pivot nonzeros of the eta column are kept
        idx = np.flatnonzero(w)
        idx = idx[idx != r]
        self.etas.append((r, w[r], idx, w[idx]))


def solve_lp(model: MilpModel, lb: np.ndarray | None = None, ub: np.ndarray | None = None,
             max_iter: int | None = None) -> LpResult:
    """Solve the continuous relaxation of ``model`` (integrality ignored).

    ``lb``/``ub`` override the model's variable bounds, which is how the
    branch-and-bound search imposes branching decisions.
    """
    lb = model.lb if lb is None else lb
    ub = model.ub if ub is None else ub
    if np.any(lb > ub + FEAS_TOL):
        return LpResult(LpStatus.INFEASIBLE)
    args = (model.obj, model.A, model.sense, model.rhs, np.minimum(lb, ub), ub, max_iter)
    try:
        res = _solve(*args)
    except np.linalg.LinAlgError:
        log.debug("singular basis; re-solving with strict pivoting")
        res = _solve(*args, pivot_tol=STRICT_PIVOT_TOL, refactor_every=STRICT_REFACTOR_EVERY)
    if res.status is LpStatus.OPTIMAL:
        res.objective += model.obj_const
    return res


def _solve(c, A, sense, rhs, lb, ub, max_iter, pivot_tol=PIVOT_TOL,
           refactor_every=REFACTOR_EVERY) -> LpResult:
    m, n = A.shape
    scale = max(1.0, float(np.max(np.abs(c), initial=0.0)))
    cs = c / scale

    slack_lb = np.array([0.0 if s in (LE, EQ) else -np.inf for s in sense])
    slack_ub = np.array([0.0 if s in (GE, EQ) else np.inf for s in sense])

    x0 = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
    resid = rhs - A @ x0
    slack0 = np.clip(resid, slack_lb, slack_ub)
    gap = resid - slack0
    art_rows = np.flatnonzero(np.abs(gap) > FEAS_TOL)
    k = len(art_rows)

    art = sp.csc_matrix((np.sign(gap[art_rows]), (art_rows, np.arange(k))), shape=(m, k))
    cols = sp.hstack([A.tocsc(), sp.identity(m, format="csc"), art], format="csc")
    colsT = cols.T.tocsr()
    N = n + m + k

    lo = np.concatenate([lb, slack_lb, np.zeros(k)])
    hi = np.concatenate([ub, slack_ub, np.full(k, np.inf)])
    x = np.concatenate([x0, slack0, np.abs(gap[art_rows])])
    state = np.where(np.isfinite(lo), _AT_LOWER, np.where(np.isfinite(hi), _AT_UPPER, _FREE))
    head = np.arange(n, n + m)
    head[art_rows] = n + m + np.arange(k)
    state[head] = _BASIC

    limit = max_iter if max_iter is not None else max(2000, 60 * (m + n))
    basis = _Basis(cols, head)
    total_iter = 0

    if k:
        cost1 = np.zeros(N)
        cost1[n + m:] = 1.0
        status, it = _iterate(cols, colsT, cost1, lo, hi, x, state, head, basis, rhs, limit,
                              pivot_tol, refactor_every)
        total_iter += it
        if status is not LpStatus.OPTIMAL:
            return LpResult(status, iterations=total_iter)
        if np.sum(x[n + m:]) > 1e-7:
            return LpResult(LpStatus.INFEASIBLE, iterations=total_iter)
        hi[n + m:] = 0.0
        x[n + m:] = np.clip(x[n + m:], 0.0, 0.0)

    cost2 = np.concatenate([cs, np.zeros(m + k)])
    status, it = _iterate(cols, colsT, cost2, lo, hi, x, state, head, basis, rhs,
                          limit - total_iter, pivot_tol, refactor_every)
    total_iter += it
    if status is not LpStatus.OPTIMAL:
        return LpResult(status, iterations=total_iter)

    basis.refactor(head)
    _recompute_basic(cols, basis, head, state, x, rhs)
    xs = x[:n].copy()
    y = basis.btran(cost2[head])
    d = cost2 - colsT @ y
    viol = max(float(np.max(lo[:n + m] - x[:n + m], initial=0.0)),
               float(np.max(x[:n + m] - hi[:n + m], initial=0.0)),
               float(np.max(np.abs(x[n + m:]), initial=0.0)))
    primal = float(cs @ xs)
    dual = float(rhs @ y)
    dn = d[:n + m]
    dn = np.where(np.abs(dn) <= DUAL_TOL, 0.0, dn)
    with np.errstate(invalid="ignore"):
        contrib = np.where(dn > 0, dn * lo[:n + m], np.where(dn < 0, dn * hi[:n + m], 0.0))
    dual += float(np.sum(contrib))
    return LpResult(
        status=LpStatus.OPTIMAL,
        objective=float(c @ xs),
        x=xs,
        duals=y * scale,
        iterations=total_iter,
        primal_violation=viol,
        duality_gap=abs(primal - dual) * scale,
    )


def _recompute_basic(cols, basis, head, state, x, rhs):
    nb = state != _BASIC
    xb = basis.ftran(rhs - cols[:, nb] @ x[nb])
    x[head] = xb


def _iterate(cols, colsT, cost, lo, hi, x, state, head, basis, rhs, limit, pivot_tol,
             refactor_every):
    m = len(head)
    fixed = lo == hi
    degenerate = 0
    bland = False
    it = 0
    while True:
        if it >= limit:
            return LpStatus.ITERATION_LIMIT, it
        y = basis.btran(cost[head])
        d = cost - colsT @ y

        cand = np.zeros(len(d), dtype=bool)
        cand |= (state == _AT_LOWER) & (d < -DUAL_TOL)
        cand |= (state == _AT_UPPER) & (d > DUAL_TOL)
        cand |= (state == _FREE) & (np.abs(d) > DUAL_TOL)
        cand &= ~fixed
        idx = np.flatnonzero(cand)
        if idx.size == 0:
            return LpStatus.OPTIMAL, it
        q = int(idx[0]) if bland else int(idx[np.argmax(np.abs(d[idx]))])
        direction = 1.0 if d[q] < 0 else -1.0

        aq = np.zeros(m)
        lo_q, hi_q = cols.indptr[q], cols.indptr[q + 1]
        aq[cols.indices[lo_q:hi_q]] = cols.data[lo_q:hi_q]
        w = basis.ftran(aq)
        alpha = direction * w
        xb = x[head]
        lob, hib = lo[head], hi[head]

        dec = alpha > pivot_tol
        inc = alpha < -pivot_tol
        ratio = np.full(m, np.inf)
        relaxed = np.full(m, np.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = dec & np.isfinite(lob)
            ratio[ok] = (xb[ok] - lob[ok]) / alpha[ok]
            relaxed[ok] = (xb[ok] - lob[ok] + FEAS_TOL) / alpha[ok]
            ok = inc & np.isfinite(hib)
            ratio[ok] = (hib[ok] - xb[ok]) / -alpha[ok]
            relaxed[ok] = (hib[ok] - xb[ok] + FEAS_TOL) / -alpha[ok]
        ratio = np.maximum(ratio, 0.0)
        relaxed = np.maximum(relaxed, 0.0)
        span = hi[q] - lo[q]

        if bland:
            tmin = ratio.min() if m else np.inf
            if tmin < np.inf:
                ties = np.flatnonzero(ratio <= tmin + 1e-12)
                r = int(ties[np.argmin(head[ties])])
                step = ratio[r]
            else:
                r, step = -1, np.inf
        else:
            tmax = relaxed.min() if m else np.inf
            if tmax < np.inf:
                pool = np.flatnonzero(ratio <= tmax)
                r = int(pool[np.argmax(np.abs(alpha[pool]))])
                step = ratio[r]
            else:
                r, step = -1, np.inf

        if np.isfinite(span) and span <= step:
            # entering variable reaches its opposite bound first
            x[q] = hi[q] if direction > 0 else lo[q]
            x[head] = xb - span * alpha
            state[q] = _AT_UPPER if direction > 0 else _AT_LOWER
            degenerate = 0 if span > 1e-12 else degenerate + 1
            bland = bland and degenerate > 0
            it += 1
            continue
        if r < 0:
            return LpStatus.UNBOUNDED, it

        x[q] += direction * step
        x[head] = xb - step * alpha
        leave = head[r]
        if alpha[r] > 0:
            x[leave] = lo[leave]
            state[leave] = _AT_LOWER
        else:
            x[leave] = hi[leave]
            state[leave] = _AT_UPPER
        if lo[leave] == hi[leave]:
            state[leave] = _AT_LOWER
        head[r] = q
        state[q] = _BASIC
        it += 1

        if step <= 1e-12:
            degenerate += 1
            if degenerate >= DEGENERATE_RUN:
                bland = True
        else:
            degenerate = 0
            bland = False

        if len(basis.etas) >= refactor_every or abs(w[r]) < 1e-7:
            basis.refactor(head)
            _recompute_basic(cols, basis, head, state, x, rhs)
        else:
            basis.push(r, w)
