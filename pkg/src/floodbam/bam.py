"""Deterministic-equivalent MILP of the budget allocation model and its variants.

Decision stages:

1. ``h(i,l)`` harden substation ``i`` to level ``l``; ``n`` dam units bought.
2. ``t(i,l,k)`` deploy dams at level ``l`` at substation ``i`` in preparedness
   node ``k``; ``p(i,k)`` is the resulting protection level, the larger of
   the hardening and dam levels.
3. Per leaf ``(k,m)``: bus survival ``z``, commitment ``u``, served load ``s``,
   generation ``g``, angle ``th``, branch flow ``e`` and ``a`` (= z_head * z_tail).

The max() defining ``p`` is linearised with four rows that rely on a dam
never being deployed at or below the hardening level (such a deployment
costs money and adds nothing). The bilinear ``z_head * z_tail`` in Ohm's
law uses the three McCormick rows, which are exact at binary ``z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .cost import CostParams
from .grid import Branch, GridModel
from .milp.bnb import MilpResult
from .milp.model import EQ, GE, LE, MilpModel, ModelBuilder
from .recourse import ProtectionState, RecourseSolution, bus_operational, solve_dispatch
from .scenario import FloodMapSet, ScenarioTree

LOOSE_M = 1e6


class BamError(ValueError):
    pass


@dataclass(frozen=True)
class BamOptions:
    valid_inequalities: bool = True
    tight_m: bool = True
    loose_m: float = LOOSE_M
    fold_z: bool = False


class BigM(NamedTuple):
    flood_above: float | None  # Delta <= p + M(1 - z)
    flood_below: float | None  # Delta >= p - M z + 1
    hardening_side: float | None  # p <= sum l h + M sum t
    dam_side: float | None  # p <= sum l t + M (1 - sum t)
    ohm: float | None  # |e - B dtheta| <= M (1 - a)


def compute_big_m(g: GridModel, maps: FloodMapSet, i: int | None = None,
                  r: int | Branch | None = None) -> BigM:
    """Smallest valid big-M constants for substation ``i`` and branch ``r``.

    Protection constants are ``None`` for a non-exposed substation, whose
    linking rows are omitted; the Ohm constant is ``None`` when no branch is
    given.
    """
    prot = (None, None, None, None)
    if i is not None and g.substations[i].is_flood_exposed:
        s = g.substations[i]
        hmax, tmax = s.hardening_max, s.tigerdam_max
        prot = (float(maps.W[i]), float(max(hmax, tmax) + 1), float(tmax), float(hmax))
    ohm = None
    if r is not None:
        br = g.branches[r] if isinstance(r, int) else r
        ohm = br.susceptance * br.max_angle_diff
    return BigM(*prot, ohm)


@dataclass(frozen=True)
class FirstStage:
    hardening: tuple[int, ...]  # level per substation, 0 = none
    n: int


@dataclass(frozen=True)
class CostBreakdown:
    """The four cost streams in integer cents."""

    hardening: int
    dam_capital: int
    expected_deployment: int
    expected_load_loss: int

    @property
    def total(self) -> int:
        return self.hardening + self.dam_capital + self.expected_deployment + self.expected_load_loss

    def millions(self) -> tuple[float, float, float, float, float]:
        vals = (self.hardening, self.dam_capital, self.expected_deployment,
                self.expected_load_loss, self.total)
        return tuple(v / 1e8 for v in vals)

    def as_dict(self) -> dict:
        return {"hardening": self.hardening, "dam_capital": self.dam_capital,
                "expected_deployment": self.expected_deployment,
                "expected_load_loss": self.expected_load_loss, "total": self.total}


@dataclass
class BamSolution:
    first: FirstStage
    second: dict[int, tuple[int, ...]]  # k -> dam level per substation
    leaf_recourse: dict[tuple[int, int], RecourseSolution]
    breakdown: CostBreakdown
    objective: float  # dollars, recomputed from the decisions
    variant: str = "bam"
    solver_objective: float | None = None
    solver: MilpResult | None = field(default=None, repr=False)
    milp_z: dict[tuple[int, int], np.ndarray] = field(default_factory=dict, repr=False)

    def protection(self, k: int) -> ProtectionState:
        return ProtectionState(self.first.hardening, self.second[k])


def _fixed_levels(g: GridModel, fixed_h) -> tuple[int, ...]:
    """Normalise a hardening fixing to one level per substation, checking it."""
    if isinstance(fixed_h, FirstStage):
        fixed_h = fixed_h.hardening
    levels = [0] * len(g.substations)
    if isinstance(fixed_h, Mapping):
        chosen: dict[int, list[int]] = {}
        for (i, l), v in fixed_h.items():
            if v not in (0, 1):
                raise BamError(f"h({i},{l}) must be 0 or 1, got {v!r}")
            if v:
                chosen.setdefault(i, []).append(l)
        for i, ls in chosen.items():
            if len(ls) > 1:
                raise BamError(f"substation {i} is assigned {len(ls)} hardening levels")
            levels[i] = ls[0]
    else:
        if len(fixed_h) != len(g.substations):
            raise BamError("hardening fixing must give one level per substation")
        levels = [int(v) for v in fixed_h]
    for s in g.substations:
        l = levels[s.id]
        if l and l not in s.hardening_levels:
            raise BamError(f"substation {s.id}: hardening level {l} not offered")
    return tuple(levels)


def build_bam(g: GridModel, maps: FloodMapSet, tree: ScenarioTree, costs: CostParams,
              options: BamOptions | None = None, *, no_dams: bool = False,
              fixed_h=None) -> MilpModel:
    """The full three-stage model; ``no_dams``/``fixed_h`` give the restricted variants."""
    opt = options or BamOptions()
    problems = costs.validate(g)
    if problems:
        raise BamError("; ".join(problems))
    fixed = _fixed_levels(g, fixed_h) if fixed_h is not None else None
    Y = costs.storms
    L = costs.L
    exposed = g.exposed
    out, inc = g.adjacency

    mb = ModelBuilder()
    h: dict[tuple[int, int], int] = {}
    for i in exposed:
        for l in g.substations[i].hardening_levels:
            h[i, l] = mb.add_var(f"h(i{i},l{l})", 0, 1, True, costs.V(i, l) / 100,
                                 1, "h", (i, l))
    n_ub = sum(g.substations[i].tigerdam_max for i in exposed)
    n = mb.add_var("n", 0, n_ub, True, costs.dam_unit_cost / 100, 1, "n", ())

    t: dict[tuple[int, int, int], int] = {}
    p: dict[tuple[int, int], int] = {}
    for node in tree.nodes:
        k = node.index
        for i in exposed:
            for l in g.substations[i].tigerdam_levels:
                t[i, l, k] = mb.add_var(f"t(i{i},l{l},k{k})", 0, 1, True,
                                        Y * node.prob * costs.C(i, l) / 100, 2, "t", (i, l, k))
        for i in exposed:
            s = g.substations[i]
            pmax = max(s.hardening_max, s.tigerdam_max)
            p[i, k] = mb.add_var(f"p(i{i},k{k})", 0, pmax, False, 0.0, 2, "p", (i, k))

    for i in exposed:
        levels = g.substations[i].hardening_levels
        if levels:
            mb.add_row(f"harden_once(i{i})", [(h[i, l], 1.0) for l in levels], LE, 1)
        if fixed is not None:
            for l in levels:
                mb.add_row(f"fix_h(i{i},l{l})", [(h[i, l], 1.0)], EQ, float(fixed[i] == l))
    if no_dams:
        mb.add_row("no_dams", [(n, 1.0)], EQ, 0)

    for node in tree.nodes:
        k = node.index
        units = []
        for i in exposed:
            s = g.substations[i]
            tl = [(t[i, l, k], 1.0) for l in s.tigerdam_levels]
            if tl:
                mb.add_row(f"deploy_once(i{i},k{k})", tl, LE, 1)
            units += [(t[i, l, k], float(l)) for l in s.tigerdam_levels]
            M = compute_big_m(g, maps, i)
            M3 = M.hardening_side if opt.tight_m else opt.loose_m
            M4 = M.dam_side if opt.tight_m else opt.loose_m
            lh = [(h[i, l], -float(l)) for l in s.hardening_levels]
            lt = [(t[i, l, k], -float(l)) for l in s.tigerdam_levels]
            pk = (p[i, k], 1.0)
            mb.add_row(f"p_ge_h(i{i},k{k})", [pk] + lh, GE, 0)
            mb.add_row(f"p_ge_t(i{i},k{k})", [pk] + lt, GE, 0)
            mb.add_row(f"p_le_h(i{i},k{k})", [pk] + lh + [(j, -M3) for j, _ in tl], LE, 0)
            mb.add_row(f"p_le_t(i{i},k{k})", [pk] + lt + [(j, M4) for j, _ in tl], LE, M4)
            if opt.valid_inequalities:
                for lt_ in s.tigerdam_levels:
                    for lh_ in s.hardening_levels:
                        if lh_ >= lt_:
                            mb.add_row(f"vi(i{i},h{lh_},t{lt_},k{k})",
                                       [(h[i, lh_], 1.0), (t[i, lt_, k], 1.0)], LE, 1)
        if units:
            mb.add_row(f"dams(k{k})", units + [(n, -1.0)], LE, 0)

    total_demand = g.total_demand
    const = 0.0
    for leaf in tree.leaves():
        k, m = leaf.k, leaf.m
        tag = f"k{k},m{m}"
        weight = Y * L * leaf.prob
        const += weight * total_demand
        heights = maps.maps[leaf.key]
        z, u, s_, gg, th = {}, {}, {}, {}, {}
        for b in g.buses:
            j = b.id
            sub = g.substations[b.substation_id]
            zl = 0.0 if sub.is_flood_exposed else 1.0
            z[j] = mb.add_var(f"z({tag},j{j})", zl, 1, True, 0.0, 3, "z", (k, m, j))
            u[j] = mb.add_var(f"u({tag},j{j})", 0, 1, b.gen_min > 0, 0.0, 3, "u", (k, m, j))
            s_[j] = mb.add_var(f"s({tag},j{j})", 0, b.demand, False, -weight, 3, "s", (k, m, j))
            gg[j] = mb.add_var(f"g({tag},j{j})", 0, b.gen_max, False, 0.0, 3, "g", (k, m, j))
            bound = 0.0 if b.is_slack else math.pi
            th[j] = mb.add_var(f"th({tag},j{j})", -bound, bound, False, 0.0, 3, "th", (k, m, j))
        e, a = {}, {}
        for r in g.branches:
            e[r.id] = mb.add_var(f"e({tag},r{r.id})", -r.capacity, r.capacity, False, 0.0, 3,
                                 "e", (k, m, r.id))
            a[r.id] = mb.add_var(f"a({tag},r{r.id})", 0, 1, False, 0.0, 3, "a", (k, m, r.id))

        for i in exposed:
            M = compute_big_m(g, maps, i)
            M1 = M.flood_above if opt.tight_m else opt.loose_m
            M2 = M.flood_below if opt.tight_m else opt.loose_m
            d = float(heights[i])
            for j in g.substations[i].bus_ids:
                mb.add_row(f"flood_above({tag},j{j})", [(p[i, k], 1.0), (z[j], -M1)], GE, d - M1)
                mb.add_row(f"flood_below({tag},j{j})", [(p[i, k], 1.0), (z[j], -M2)], LE, d - 1)
            if opt.fold_z:
                first, *rest = g.substations[i].bus_ids
                for j in rest:
                    mb.add_row(f"fold({tag},j{j})", [(z[j], 1.0), (z[first], -1.0)], EQ, 0)

        for b in g.buses:
            j = b.id
            mb.add_row(f"commit({tag},j{j})", [(u[j], 1.0), (z[j], -1.0)], LE, 0)
            mb.add_row(f"serve({tag},j{j})", [(s_[j], 1.0), (z[j], -b.demand)], LE, 0)
            mb.add_row(f"gmax({tag},j{j})", [(gg[j], 1.0), (u[j], -b.gen_max)], LE, 0)
            if b.gen_min > 0:
                mb.add_row(f"gmin({tag},j{j})", [(gg[j], 1.0), (u[j], -b.gen_min)], GE, 0)
            terms = [(e[r], 1.0) for r in out[j]] + [(e[r], -1.0) for r in inc[j]]
            mb.add_row(f"balance({tag},j{j})", terms + [(gg[j], -1.0), (s_[j], 1.0)], EQ, 0)

        for r in g.branches:
            ri, P = r.id, r.capacity
            zh, zt = z[r.head], z[r.tail]
            for end, zv in (("h", zh), ("t", zt)):
                mb.add_row(f"cap_{end}_up({tag},r{ri})", [(e[ri], 1.0), (zv, -P)], LE, 0)
                mb.add_row(f"cap_{end}_dn({tag},r{ri})", [(e[ri], 1.0), (zv, P)], GE, 0)
            mb.add_row(f"a_le_h({tag},r{ri})", [(a[ri], 1.0), (zh, -1.0)], LE, 0)
            mb.add_row(f"a_le_t({tag},r{ri})", [(a[ri], 1.0), (zt, -1.0)], LE, 0)
            mb.add_row(f"a_ge({tag},r{ri})", [(a[ri], 1.0), (zh, -1.0), (zt, -1.0)], GE, -1)
            M5 = compute_big_m(g, maps, None, r).ohm if opt.tight_m else opt.loose_m
            B = r.susceptance
            flow = [(e[ri], 1.0), (th[r.head], -B), (th[r.tail], B)]
            mb.add_row(f"ohm_up({tag},r{ri})", flow + [(a[ri], M5)], LE, M5)
            mb.add_row(f"ohm_dn({tag},r{ri})", [(j, -c) for j, c in flow] + [(a[ri], M5)], LE, M5)
            dth = [(th[r.head], 1.0), (th[r.tail], -1.0)]
            mb.add_row(f"angle_up({tag},r{ri})", dth, LE, r.max_angle_diff)
            mb.add_row(f"angle_dn({tag},r{ri})", dth, GE, -r.max_angle_diff)

    mb.obj_const = const
    return mb.build()


def build_bam_np(g, maps, tree, costs, options=None) -> MilpModel:
    """No preparedness: dam acquisition forced to zero."""
    return build_bam(g, maps, tree, costs, options, no_dams=True)


def build_bam_d(g, maps, tree, costs, fixed_h, options=None) -> MilpModel:
    """Decoupled: hardening pinned to ``fixed_h``; dams re-optimised."""
    return build_bam(g, maps, tree, costs, options, fixed_h=fixed_h)


def evaluate_decisions(g: GridModel, maps: FloodMapSet, tree: ScenarioTree, costs: CostParams,
                       hardening: Sequence[int], n: int, second: Mapping[int, Sequence[int]],
                       backend: str = "embedded"):
    """Cost breakdown (cents), objective (dollars) and leaf recourse for given decisions."""
    Y = costs.storms
    hard = sum(costs.V(i, l) for i, l in enumerate(hardening))
    capital = costs.dam_unit_cost * n
    deploy = Y * sum(node.prob * sum(costs.C(i, l) for i, l in enumerate(second[node.index]))
                     for node in tree.nodes)
    cache: dict[bytes, RecourseSolution] = {}
    leaves = {}
    shed = 0.0
    for leaf in tree.leaves():
        prot = ProtectionState(tuple(hardening), tuple(second[leaf.k]))
        z = bus_operational(g, prot, maps.maps[leaf.key])
        key = z.tobytes()
        if key not in cache:
            cache[key] = solve_dispatch(g, z, backend)
        leaves[leaf.k, leaf.m] = cache[key]
        shed += leaf.prob * cache[key].shed
    loss_dollars = Y * costs.L * shed
    objective = (hard + capital + deploy) / 100 + loss_dollars
    breakdown = CostBreakdown(int(hard), int(capital), round(deploy), round(loss_dollars * 100))
    return breakdown, objective, leaves


def decode(model: MilpModel, x: np.ndarray, g: GridModel, tree: ScenarioTree):
    """Read hardening levels, dam units and per-node dam levels off an assignment."""
    hard = [0] * len(g.substations)
    second = {node.index: [0] * len(g.substations) for node in tree.nodes}
    n = 0
    for j, name in enumerate(model.var_names):
        meta = model.meta[name]
        v = x[j]
        if meta.symbol == "h" and v > 0.5:
            i, l = meta.index
            if hard[i]:
                raise BamError(f"substation {i} decoded with two hardening levels")
            hard[i] = l
        elif meta.symbol == "t" and v > 0.5:
            i, l, k = meta.index
            if second[k][i]:
                raise BamError(f"substation {i} decoded with two dam levels in node {k}")
            second[k][i] = l
        elif meta.symbol == "n":
            n = int(round(v))
    return tuple(hard), n, {k: tuple(v) for k, v in second.items()}


def milp_bus_status(model: MilpModel, x: np.ndarray, g: GridModel) -> dict:
    """The MILP's own z assignment per leaf."""
    out: dict[tuple[int, int], np.ndarray] = {}
    for j, name in enumerate(model.var_names):
        meta = model.meta[name]
        if meta.symbol == "z":
            k, m, b = meta.index
            arr = out.setdefault((k, m), np.zeros(len(g.buses), dtype=bool))
            arr[b] = x[j] > 0.5
    return out


def extract_solution(model: MilpModel, result: MilpResult | np.ndarray, g: GridModel,
                     maps: FloodMapSet, tree: ScenarioTree, costs: CostParams,
                     variant: str = "bam", rel_tol: float = 1e-6) -> BamSolution:
    """Decode an optimal assignment and recompute every cost stream independently.

    The recomputed objective must match the solver's within ``rel_tol``
    (plus the solver's own optimality gap, which bounds how far its
    recourse values may sit from the true minimum).
    """
    if isinstance(result, MilpResult):
        if result.x is None:
            raise BamError(f"no assignment to extract (status {result.status.value})")
        x, solver_obj, slack = result.x, result.objective, max(0.0, result.objective - result.best_bound)
    else:
        x = np.asarray(result, dtype=float)
        solver_obj, slack = model.objective_value(x), 0.0
    hard, n, second = decode(model, x, g, tree)
    breakdown, objective, leaves = evaluate_decisions(g, maps, tree, costs, hard, n, second)
    diff = abs(objective - solver_obj)
    if diff > rel_tol * max(1.0, abs(solver_obj)) + slack:
        raise BamError(f"recomputed objective {objective:.10g} disagrees with solver "
                       f"objective {solver_obj:.10g}")
    return BamSolution(
        first=FirstStage(hard, n), second=second, leaf_recourse=leaves, breakdown=breakdown,
        objective=objective, variant=variant, solver_objective=solver_obj,
        solver=result if isinstance(result, MilpResult) else None,
        milp_z=milp_bus_status(model, x, g),
    )
