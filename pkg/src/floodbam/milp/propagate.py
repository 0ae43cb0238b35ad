"""Activity-based bound tightening over the constraint rows.

Every row is rewritten as ``g.x <= h`` (equalities contribute two rows).
For each nonzero the minimum activity of the rest of the row implies a
bound on that variable. Integer bounds are rounded; continuous bounds are
backed off by a small margin so that floating-point error can only make
them looser than the exact implied bound, never tighter. The exception is
a continuous domain whose unmargined implied bounds come within
``PIN_TOL`` of each other: it is fixed exactly at the implied value.
Without that, a big-M row can amplify a sub-tolerance gap (say a McCormick
product at 1 - 1e-9 against M = 1e6) into a visible relaxation of the
constraint it switches. Integer rounding uses a tolerance well above the
margins so that margin slack never rounds an integer bound the wrong way.
"""

from __future__ import annotations

import numpy as np

from .model import EQ, GE, LE, MilpModel

INT_ROUND_TOL = 1e-6
CONT_MARGIN = 1e-9
CONT_MIN_GAIN = 1e-6
PIN_TOL = 1e-8


class Propagator:
    def __init__(self, model: MilpModel):
        A = model.A.tocoo()
        rows, cols, vals = [A.row], [A.col], [A.data]
        sense = np.array([{LE: 0, EQ: 1, GE: 2}[s] for s in model.sense], dtype=int)
        h = [model.rhs]
        # GE and EQ rows, negated, become extra <= rows
        flip = np.flatnonzero(sense >= 1)
        remap = -np.ones(model.num_rows, dtype=int)
        remap[flip] = model.num_rows + np.arange(len(flip))
        keep = sense[A.row] >= 1
        rows.append(remap[A.row[keep]])
        cols.append(A.col[keep])
        vals.append(-A.data[keep])
        h.append(-model.rhs[flip])
        # pure GE rows must not also appear as <= rows
        drop_le = sense[A.row] == 2
        rows[0], cols[0], vals[0] = A.row[~drop_le], A.col[~drop_le], A.data[~drop_le]
        self.h = np.concatenate(h)
        self.h[np.flatnonzero(sense == 2)] = np.inf
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)
        self.vals = np.concatenate(vals)
        self.nrows = len(self.h)
        self.integer = model.integer.copy()
        self.n = model.num_vars

    def run(self, lb: np.ndarray, ub: np.ndarray, max_rounds: int = 10):
        """Return ``(feasible, lb, ub)`` with tightened copies of the bounds."""
        lb = lb.copy()
        ub = ub.copy()
        integer = self.integer
        lb[integer] = np.ceil(lb[integer] - INT_ROUND_TOL)
        ub[integer] = np.floor(ub[integer] + INT_ROUND_TOL)
        if np.any(lb > ub + 1e-9):
            return False, lb, ub
        rlb, rub = lb.copy(), ub.copy()
        r, c, a = self.rows, self.cols, self.vals
        pos = a > 0
        for _ in range(max_rounds):
            contrib = np.where(pos, a * lb[c], a * ub[c])
            isinf = ~np.isfinite(contrib)
            finite = np.where(isinf, 0.0, contrib)
            minact = np.bincount(r, weights=finite, minlength=self.nrows)
            ninf = np.bincount(r, weights=isinf.astype(float), minlength=self.nrows)
            slack_tol = 1e-7 * np.maximum(1.0, np.abs(self.h))
            with np.errstate(invalid="ignore"):
                bad = (ninf == 0) & (minact > self.h + slack_tol)
            if np.any(bad):
                return False, lb, ub

            usable = np.where(isinf, ninf[r] == 1, ninf[r] == 0) & np.isfinite(self.h[r])
            if not np.any(usable):
                break
            ru, cu, au = r[usable], c[usable], a[usable]
            resid = minact[ru] - np.where(isinf[usable], 0.0, contrib[usable])
            bound = (self.h[ru] - resid) / au

            new_ub = np.full(self.n, np.inf)
            new_lb = np.full(self.n, -np.inf)
            up = au > 0
            np.minimum.at(new_ub, cu[up], bound[up])
            np.maximum.at(new_lb, cu[~up], bound[~up])

            changed = False
            fin = np.isfinite(new_ub)
            cand = new_ub.copy()
            cand[integer & fin] = np.floor(new_ub[integer & fin] + INT_ROUND_TOL)
            cont = ~integer & fin
            cand[cont] = new_ub[cont] + CONT_MARGIN * np.maximum(1.0, np.abs(new_ub[cont]))
            gain = ub - cand
            need = np.where(integer, gain > 0.5, gain > CONT_MIN_GAIN * np.maximum(1.0, np.abs(cand)))
            need &= fin
            if np.any(need):
                ub[need] = cand[need]
                changed = True

            fin = np.isfinite(new_lb)
            cand = new_lb.copy()
            cand[integer & fin] = np.ceil(new_lb[integer & fin] - INT_ROUND_TOL)
            cont = ~integer & fin
            cand[cont] = new_lb[cont] - CONT_MARGIN * np.maximum(1.0, np.abs(new_lb[cont]))
            gain = cand - lb
            need = np.where(integer, gain > 0.5, gain > CONT_MIN_GAIN * np.maximum(1.0, np.abs(cand)))
            need &= fin
            if np.any(need):
                lb[need] = cand[need]
                changed = True

            if np.any(lb > ub + 1e-9):
                return False, lb, ub

            # continuous domains whose unmargined bounds have collapsed are fixed exactly
            np.minimum(rub, np.where(integer, np.inf, new_ub), out=rub)
            np.maximum(rlb, np.where(integer, -np.inf, new_lb), out=rlb)
            pin = ~integer & (ub > lb) & (rub - rlb <= PIN_TOL * np.maximum(1.0, np.abs(rub)))
            if np.any(pin):
                value = np.where(rlb[pin] <= rub[pin], rlb[pin], 0.5 * (rlb[pin] + rub[pin]))
                value = np.clip(value, lb[pin], ub[pin])
                lb[pin] = value
                ub[pin] = value
                changed = True
            if not changed:
                break
        # continuous bounds may cross by a hair after margins; pin them together
        cross = lb > ub
        lb[cross] = ub[cross]
        return True, lb, ub


def fixed_integer_bounds(model: MilpModel, x: np.ndarray, lb: np.ndarray, ub: np.ndarray):
    """Bounds with every integer variable pinned to the rounded value of ``x``."""
    lb = lb.copy()
    ub = ub.copy()
    xi = np.round(x[model.integer])
    lb[model.integer] = xi
    ub[model.integer] = xi
    return lb, ub

