"""Flood-aware DC power flow for one realised scenario and fixed protection.

With protection levels and flood heights known, which buses survive is
data: a bus is operational iff its substation is not flood-exposed or the
flood height does not exceed the protection level. What remains is a
load-shedding DC power flow. It is a plain LP when no generator has a
positive minimum output (commitment ``u_j`` can then be taken equal to
``z_j``), otherwise a small MIP over the commitment binaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import GridModel
from .milp.model import EQ, GE, LE, ModelBuilder
from .scenario import FloodMapSet, ScenarioTree

FEAS_TOL = 1e-8
ANGLE_TOL = 1e-9


class RecourseError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProtectionState:
    """Chosen levels per substation (0 = none); ``dam_level`` is for one preparedness node."""

    hardening: tuple[int, ...]
    dam_level: tuple[int, ...]

    def __post_init__(self):
        if len(self.hardening) != len(self.dam_level):
            raise ValueError("hardening and dam_level must cover the same substations")

    @classmethod
    def none(cls, num_substations: int) -> "ProtectionState":
        return cls((0,) * num_substations, (0,) * num_substations)

    def level(self, i: int) -> int:
        return max(self.hardening[i], self.dam_level[i])

    def check(self, g: GridModel) -> list[str]:
        problems = []
        for s in g.substations:
            h, t = self.hardening[s.id], self.dam_level[s.id]
            if h and h not in s.hardening_levels:
                problems.append(f"substation {s.id}: hardening level {h} not offered")
            if t and t not in s.tigerdam_levels:
                problems.append(f"substation {s.id}: dam level {t} not offered")
        return problems


@dataclass(frozen=True)
class RecourseSolution:
    bus_operational: np.ndarray  # z_j
    dispatch_on: np.ndarray  # u_j
    served: np.ndarray  # s_j
    generation: np.ndarray  # g_j
    angle: np.ndarray  # theta_j
    flow: np.ndarray  # e_r
    shed: float

    def summary(self) -> dict:
        return {
            "shed": self.shed,
            "operational": [bool(v) for v in self.bus_operational],
            "served": [float(v) for v in self.served],
            "generation": [float(v) for v in self.generation],
        }


def operational_status(p: int, delta: int) -> bool:
    """A protected substation survives a flood no higher than its protection level."""
    return delta <= p


def bus_operational(g: GridModel, prot: ProtectionState, heights: Sequence[int]) -> np.ndarray:
    z = np.ones(len(g.buses), dtype=bool)
    for s in g.substations:
        if s.is_flood_exposed and not operational_status(prot.level(s.id), int(heights[s.id])):
            z[list(s.bus_ids)] = False
    return z


def solve_recourse(g: GridModel, prot: ProtectionState, heights: Sequence[int],
                   backend: str = "embedded") -> RecourseSolution:
    """Minimum load shed for one scenario with flood heights ``heights`` (per substation)."""
    return solve_dispatch(g, bus_operational(g, prot, heights), backend)


def solve_dispatch(g: GridModel, z: np.ndarray, backend: str = "embedded",
                   commitment: bool | None = None) -> RecourseSolution:
    """Minimum load shed given which buses are operational.

    Commitment binaries are only needed when some operational bus has a
    positive minimum output; ``commitment=True`` forces them anyway.
    """
    from .milp.backends import backend_solve
    from .milp.bnb import BnbConfig, MilpStatus

    z = np.asarray(z, dtype=bool)
    need_commit = commitment if commitment is not None else any(
        b.gen_min > 0 and z[b.id] for b in g.buses)
    mb = ModelBuilder()
    s_idx, g_idx, u_idx, th_idx = [], [], [], []
    for b in g.buses:
        zj = float(z[b.id])
        s_idx.append(mb.add_var(f"s{b.id}", 0.0, zj * b.demand, obj=-1.0))
        if need_commit:
            u = mb.add_var(f"u{b.id}", 0.0, zj, integer=True)
            gj = mb.add_var(f"g{b.id}", 0.0, zj * b.gen_max)
            mb.add_row(f"gmax{b.id}", [(gj, 1.0), (u, -b.gen_max)], LE, 0.0)
            if b.gen_min > 0:
                mb.add_row(f"gmin{b.id}", [(gj, 1.0), (u, -b.gen_min)], GE, 0.0)
            u_idx.append(u)
        else:
            gj = mb.add_var(f"g{b.id}", 0.0, zj * b.gen_max)
        g_idx.append(gj)
        fixed = 0.0 if b.is_slack else math.pi
        th_idx.append(mb.add_var(f"th{b.id}", -fixed, fixed))
    e_idx = []
    for r in g.branches:
        cap = r.capacity if z[r.head] and z[r.tail] else 0.0
        e_idx.append(mb.add_var(f"e{r.id}", -cap, cap))
    out, inc = g.adjacency
    for b in g.buses:
        terms = [(e_idx[r], 1.0) for r in out[b.id]] + [(e_idx[r], -1.0) for r in inc[b.id]]
        terms += [(g_idx[b.id], -1.0), (s_idx[b.id], 1.0)]
        mb.add_row(f"bal{b.id}", terms, EQ, 0.0)
    for r in g.branches:
        dth = [(th_idx[r.head], 1.0), (th_idx[r.tail], -1.0)]
        if z[r.head] and z[r.tail]:
            mb.add_row(f"ohm{r.id}", [(e_idx[r.id], 1.0)] + [(j, -r.susceptance * a) for j, a in dth],
                       EQ, 0.0)
        mb.add_row(f"angmax{r.id}", dth, LE, r.max_angle_diff)
        mb.add_row(f"angmin{r.id}", dth, GE, -r.max_angle_diff)
    mb.obj_const = g.total_demand
    model = mb.build()

    res = backend_solve(model, backend, BnbConfig(relative_gap_target=1e-9))
    if res.status is not MilpStatus.OPTIMAL:
        raise RecourseError(f"recourse solve ended with status {res.status.value}")
    x = res.x
    served = x[s_idx]
    gen = x[g_idx]
    u = np.round(x[u_idx]).astype(bool) if need_commit else z.copy()
    shed = float(g.total_demand - served.sum())
    if shed < 0:
        if shed < -FEAS_TOL:
            raise RecourseError(f"negative shed {shed:.3g}")
        shed = 0.0
    return RecourseSolution(z.copy(), u, served, gen, x[th_idx], x[e_idx], shed)


def audit_recourse(g: GridModel, sol: RecourseSolution, tol: float = FEAS_TOL) -> list[str]:
    """Check a claimed recourse solution against the physics directly, without a solver."""
    problems = []
    z, u = sol.bus_operational, sol.dispatch_on
    for b in g.buses:
        j = b.id
        s, gj = sol.served[j], sol.generation[j]
        if s < -tol or s > z[j] * b.demand + tol:
            problems.append(f"bus {j}: served {s:.6g} outside [0, {z[j] * b.demand:.6g}]")
        if u[j] and not z[j]:
            problems.append(f"bus {j}: dispatched while not operational")
        if gj < u[j] * b.gen_min - tol or gj > u[j] * b.gen_max + tol:
            problems.append(f"bus {j}: generation {gj:.6g} outside commitment limits")
        if not -math.pi - ANGLE_TOL <= sol.angle[j] <= math.pi + ANGLE_TOL:
            problems.append(f"bus {j}: angle {sol.angle[j]:.6g} outside [-pi, pi]")
        out = sum(sol.flow[r.id] for r in g.branches if r.head == j)
        inc = sum(sol.flow[r.id] for r in g.branches if r.tail == j)
        if abs(out - inc - (gj - s)) > tol:
            problems.append(f"bus {j}: conservation residual {out - inc - gj + s:.3g}")
    if abs(sol.angle[g.slack]) > tol:
        problems.append(f"slack angle {sol.angle[g.slack]:.3g} != 0")
    for r in g.branches:
        e = sol.flow[r.id]
        lim = min(z[r.head], z[r.tail]) * r.capacity
        if abs(e) > lim + tol:
            problems.append(f"branch {r.id}: flow {e:.6g} exceeds {lim:.6g}")
        dth = sol.angle[r.head] - sol.angle[r.tail]
        if abs(dth) > r.max_angle_diff + ANGLE_TOL:
            problems.append(f"branch {r.id}: angle difference {dth:.6g} over limit")
        if z[r.head] and z[r.tail] and abs(e - r.susceptance * dth) > tol:
            problems.append(f"branch {r.id}: Ohm residual {e - r.susceptance * dth:.3g}")
    if abs(sol.generation.sum() - sol.served.sum()) > tol:
        problems.append("total generation differs from total served load")
    if sol.shed < -tol:
        problems.append("negative shed")
    if abs(sol.shed - (g.total_demand - sol.served.sum())) > tol:
        problems.append("shed disagrees with served load")
    return problems


def expected_shed(g: GridModel, tree: ScenarioTree, maps: FloodMapSet,
                  hardening: Sequence[int], dam_levels: Sequence[Sequence[int]],
                  backend: str = "embedded") -> float:
    """Probability-weighted shed over every leaf; ``dam_levels[k]`` is node k's deployment."""
    cache: dict[bytes, float] = {}
    total = 0.0
    for leaf in tree.leaves():
        prot = ProtectionState(tuple(hardening), tuple(dam_levels[leaf.k]))
        z = bus_operational(g, prot, maps.maps[leaf.key])
        key = z.tobytes()
        if key not in cache:
            cache[key] = solve_dispatch(g, z, backend).shed
        total += leaf.prob * cache[key]
    return total
