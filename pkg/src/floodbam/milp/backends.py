"""Backend boundary: the embedded branch-and-bound, or HiGHS through SciPy.

The HiGHS adapter exists for differential testing; both return a
``MilpResult`` with the same meaning.
"""

from __future__ import annotations

import time

import numpy as np

from .bnb import BnbConfig, BnbStats, MilpResult, MilpStatus, solve_milp
from .model import GE, LE, MilpModel

BACKENDS = ("embedded", "highs")


def backend_solve(model: MilpModel, backend_id: str = "embedded",
                  cfg: BnbConfig | None = None) -> MilpResult:
    if backend_id == "embedded":
        return solve_milp(model, cfg)
    if backend_id == "highs":
        return _solve_highs(model, cfg or BnbConfig())
    raise ValueError(f"unknown backend {backend_id!r}; choose from {', '.join(BACKENDS)}")


def _solve_highs(model: MilpModel, cfg: BnbConfig) -> MilpResult:
    from scipy.optimize import Bounds, LinearConstraint, milp

    t0 = time.perf_counter()
    lo = np.array([-np.inf if s == LE else r for s, r in zip(model.sense, model.rhs)])
    hi = np.array([np.inf if s == GE else r for s, r in zip(model.sense, model.rhs)])
    constraints = [LinearConstraint(model.A, lo, hi)] if model.num_rows else []
    options = {"mip_rel_gap": cfg.relative_gap_target, "disp": False}
    if cfg.time_limit is not None:
        options["time_limit"] = cfg.time_limit
    if cfg.node_limit is not None:
        options["node_limit"] = cfg.node_limit
    res = milp(model.obj, integrality=model.integer.astype(int),
               bounds=Bounds(model.lb, model.ub), constraints=constraints, options=options)
    stats = BnbStats(nodes=int(getattr(res, "mip_node_count", 0) or 0),
                     seconds=time.perf_counter() - t0)
    if res.x is None:
        status = {2: MilpStatus.INFEASIBLE, 3: MilpStatus.UNBOUNDED}.get(
            res.status, MilpStatus.LIMIT_UNKNOWN)
        return MilpResult(status, stats=stats)
    x = res.x.copy()
    x[model.integer] = np.round(x[model.integer])
    obj = model.objective_value(x)
    bound = getattr(res, "mip_dual_bound", None)
    bound = obj if bound is None or not np.isfinite(bound) else bound + model.obj_const
    status = MilpStatus.OPTIMAL if res.status == 0 else MilpStatus.LIMIT_FEASIBLE
    return MilpResult(status, obj, x, min(bound, obj), None, stats)
