"""Branch-and-bound over integer-marked variables.

Each node carries its own bound arrays. Nodes are propagated, solved from
scratch with the embedded simplex, and either pruned, accepted as an
incumbent, or split on one fractional variable. A candidate incumbent is
*polished*: integers are rounded exactly and the continuous part is
re-solved, so a big-M relaxation whose binaries sit within the integrality
tolerance of a wrong value is never reported as feasible.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .model import MilpModel
from .propagate import Propagator, fixed_integer_bounds
from .simplex import LpResult, LpStatus, solve_lp

log = logging.getLogger(__name__)


class MilpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT_FEASIBLE = "limit_feasible"
    LIMIT_UNKNOWN = "limit_unknown"


@dataclass(frozen=True)
class BnbConfig:
    integrality_tol: float = 1e-6
    relative_gap_target: float = 1e-6
    node_limit: int | None = None
    time_limit: float | None = None
    branching_rule: str = "most_fractional"
    node_order: str = "best_bound"

    def __post_init__(self):
        if self.integrality_tol <= 0 or self.relative_gap_target <= 0:
            raise ValueError("tolerances must be positive")
        if self.branching_rule not in ("most_fractional", "pseudo_cost"):
            raise ValueError(f"unknown branching rule {self.branching_rule!r}")
        if self.node_order not in ("best_bound", "depth_first"):
            raise ValueError(f"unknown node order {self.node_order!r}")


@dataclass
class BnbStats:
    nodes: int = 0
    incumbents: int = 0
    lp_iterations: int = 0
    max_depth: int = 0
    lower_bounds: list[float] = field(default_factory=list)
    incumbent_values: list[float] = field(default_factory=list)
    seconds: float = 0.0


@dataclass
class MilpResult:
    status: MilpStatus
    objective: float = math.inf
    x: np.ndarray | None = None
    best_bound: float = -math.inf
    duals: np.ndarray | None = None
    stats: BnbStats = field(default_factory=BnbStats)

    @property
    def gap(self) -> float:
        if self.x is None:
            return math.inf
        return max(0.0, self.objective - self.best_bound) / max(1.0, abs(self.objective))

    @property
    def has_solution(self) -> bool:
        return self.x is not None


@dataclass
class _Node:
    lb: np.ndarray
    ub: np.ndarray
    bound: float
    depth: int
    branch: tuple[int, int, float] | None = None  # (var, direction, fractional distance)


class _PseudoCosts:
    def __init__(self, n):
        self.sum = np.zeros((2, n))
        self.count = np.zeros((2, n))

    def update(self, j, direction, dist, gain):
        if dist > 0 and math.isfinite(gain):
            self.sum[direction, j] += max(gain, 0.0) / dist
            self.count[direction, j] += 1

    def estimate(self, direction, js):
        cnt = self.count[direction]
        known = cnt > 0
        default = float(np.mean(self.sum[direction][known] / cnt[known])) if known.any() else 1.0
        out = np.full(len(js), default)
        kj = known[js]
        out[kj] = self.sum[direction, js[kj]] / cnt[js[kj]]
        return out


def solve_milp(model: MilpModel, cfg: BnbConfig | None = None) -> MilpResult:
    """Minimise ``model`` to within ``cfg.relative_gap_target``."""
    cfg = cfg or BnbConfig()
    t0 = time.perf_counter()
    stats = BnbStats()
    prop = Propagator(model)
    ints = np.flatnonzero(model.integer)
    pc = _PseudoCosts(model.num_vars)

    ok, lb, ub = prop.run(model.lb, model.ub)
    if not ok:
        stats.seconds = time.perf_counter() - t0
        return MilpResult(MilpStatus.INFEASIBLE, stats=stats)

    seq = itertools.count()
    open_nodes: list = []

    def push(node: _Node):
        s = next(seq)
        if cfg.node_order == "best_bound":
            heapq.heappush(open_nodes, (node.bound, -s, node))
        else:
            open_nodes.append((node.bound, -s, node))

    def pop() -> _Node:
        if cfg.node_order == "best_bound":
            return heapq.heappop(open_nodes)[2]
        return open_nodes.pop()[2]

    def open_bound() -> float:
        if not open_nodes:
            return math.inf
        if cfg.node_order == "best_bound":
            return open_nodes[0][0]
        return min(item[0] for item in open_nodes)

    incumbent: np.ndarray | None = None
    inc_obj = math.inf
    inc_duals = None

    def cutoff() -> float:
        if incumbent is None:
            return math.inf
        return inc_obj - cfg.relative_gap_target * max(1.0, abs(inc_obj))

    push(_Node(lb, ub, -math.inf, 0))
    limit_hit = False
    pruned_floor = math.inf  # smallest bound among nodes cut off by the incumbent

    def record():
        stats.lower_bounds.append(min(open_bound(), pruned_floor, inc_obj))
        stats.incumbent_values.append(inc_obj)

    while open_nodes:
        if cfg.node_limit is not None and stats.nodes >= cfg.node_limit:
            limit_hit = True
            break
        if cfg.time_limit is not None and time.perf_counter() - t0 > cfg.time_limit:
            limit_hit = True
            break
        node = pop()
        if node.bound >= cutoff():
            pruned_floor = min(pruned_floor, node.bound)
            continue
        ok, lb, ub = prop.run(node.lb, node.ub)
        if not ok:
            continue
        lp = solve_lp(model, lb, ub)
        stats.nodes += 1
        stats.lp_iterations += lp.iterations
        stats.max_depth = max(stats.max_depth, node.depth)
        if lp.status is LpStatus.UNBOUNDED:
            if node.depth == 0:
                stats.seconds = time.perf_counter() - t0
                return MilpResult(MilpStatus.UNBOUNDED, stats=stats)
            continue
        if lp.status is LpStatus.ITERATION_LIMIT:
            log.warning("LP iteration limit at depth %d; node dropped", node.depth)
            limit_hit = True
            pruned_floor = min(pruned_floor, node.bound)
            continue
        if lp.status is not LpStatus.OPTIMAL:
            record()
            continue
        if node.branch is not None:
            j, direction, dist = node.branch
            pc.update(j, direction, dist, lp.objective - node.bound)
        if lp.objective >= cutoff():
            pruned_floor = min(pruned_floor, lp.objective)
            record()
            continue

        x = lp.x
        frac_dist = np.abs(x[ints] - np.round(x[ints]))
        fractional = ints[frac_dist > cfg.integrality_tol]
        branch_on = None
        if fractional.size == 0:
            polished = _polish(model, prop, x, lb, ub)
            if polished is None:
                worst = int(np.argmax(frac_dist)) if ints.size else -1
                if worst >= 0 and frac_dist[worst] > 0:
                    branch_on = int(ints[worst])
                else:
                    log.warning("integral LP point failed polishing at depth %d", node.depth)
            elif polished.objective < inc_obj:
                incumbent = polished.x
                inc_obj = polished.objective
                inc_duals = polished.duals
                stats.incumbents += 1
                log.debug("incumbent %.10g at node %d", inc_obj, stats.nodes)
            if branch_on is None and polished is not None:
                # the node's LP optimum is integral: nothing below it beats it
                pruned_floor = min(pruned_floor, lp.objective)
        else:
            branch_on = _select(cfg, x, fractional, pc)

        if branch_on is not None:
            xj = x[branch_on]
            down_ub = ub.copy()
            down_ub[branch_on] = math.floor(xj)
            up_lb = lb.copy()
            up_lb[branch_on] = math.floor(xj) + 1
            f = xj - math.floor(xj)
            push(_Node(lb, down_ub, lp.objective, node.depth + 1, (branch_on, 0, f)))
            push(_Node(up_lb, ub, lp.objective, node.depth + 1, (branch_on, 1, 1.0 - f)))
        record()

    stats.seconds = time.perf_counter() - t0
    if incumbent is None:
        status = MilpStatus.LIMIT_UNKNOWN if limit_hit else MilpStatus.INFEASIBLE
        return MilpResult(status, stats=stats)
    best_bound = min(open_bound(), pruned_floor, inc_obj)
    x = incumbent.copy()
    x[ints] = np.round(x[ints])
    status = MilpStatus.LIMIT_FEASIBLE if limit_hit else MilpStatus.OPTIMAL
    return MilpResult(status, inc_obj, x, best_bound, inc_duals, stats)


def _select(cfg: BnbConfig, x: np.ndarray, fractional: np.ndarray, pc: _PseudoCosts) -> int:
    f = x[fractional] - np.floor(x[fractional])
    if cfg.branching_rule == "most_fractional":
        score = np.minimum(f, 1.0 - f)
    else:
        down = pc.estimate(0, fractional) * f
        up = pc.estimate(1, fractional) * (1.0 - f)
        score = np.maximum(down, 1e-6) * np.maximum(up, 1e-6)
    # argmax returns the first maximum, i.e. the lowest variable index
    return int(fractional[np.argmax(score)])


def _polish(model: MilpModel, prop: Propagator, x, lb, ub) -> LpResult | None:
    flb, fub = fixed_integer_bounds(model, x, lb, ub)
    if np.any(flb < lb - 1e-9) or np.any(fub > ub + 1e-9):
        return None
    ok, flb, fub = prop.run(flb, fub)
    if not ok:
        return None
    res = solve_lp(model, flb, fub)
    if res.status is not LpStatus.OPTIMAL:
        return None
    res.x[model.integer] = np.round(res.x[model.integer])
    return res
