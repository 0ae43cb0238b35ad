"""Exhaustive-enumeration ground truth for tiny instances.

Every hardening choice (one level or none per exposed substation) and, for
every preparedness node, every deployment choice is evaluated exactly. The
dam purchase is the smallest one that covers every node's deployment,
since buying more only adds capital cost.

Load shed depends on the decisions only through which exposed substations
survive, so shed is computed once per survival pattern (at most 2^E LPs)
and the enumeration itself is pure array arithmetic.
"""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from .bam import BamSolution, FirstStage, _fixed_levels, evaluate_decisions
from .cost import CostParams
from .grid import GridModel
from .recourse import solve_dispatch
from .scenario import FloodMapSet, ScenarioTree

DEFAULT_MAX_SPACE = 10_000_000
TIE_TOL = 1e-9


class SearchSpaceTooLarge(ValueError):
    pass


def search_space(g: GridModel, tree: ScenarioTree, variant: str = "bam") -> int:
    nh = 1 if variant == "bam_d" else int(np.prod(
        [len(g.substations[i].hardening_levels) + 1 for i in g.exposed], dtype=float))
    nt = 1 if variant == "bam_np" else int(np.prod(
        [len(g.substations[i].tigerdam_levels) + 1 for i in g.exposed], dtype=float))
    return nh * nt ** len(tree.nodes)


def enumerate_optimum(g: GridModel, maps: FloodMapSet, tree: ScenarioTree, costs: CostParams,
                      variant: str = "bam", fixed_h: Sequence[int] | None = None,
                      max_space: int = DEFAULT_MAX_SPACE) -> BamSolution:
    if variant not in ("bam", "bam_np", "bam_d"):
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "bam_d" and fixed_h is None:
        raise ValueError("variant bam_d needs fixed_h")
    size = search_space(g, tree, variant)
    if size > max_space:
        raise SearchSpaceTooLarge(f"search space {size} exceeds cap {max_space}")

    E = list(g.exposed)
    ns = len(g.substations)
    Y, L = costs.storms, costs.L

    if variant == "bam_d":
        fixed = _fixed_levels(g, fixed_h)
        h_choices = np.array([[fixed[i] for i in E]], dtype=int)
    else:
        h_choices = _product([(0,) + g.substations[i].hardening_levels for i in E])
    if variant == "bam_np":
        t_choices = np.zeros((1, len(E)), dtype=int)
    else:
        t_choices = _product([(0,) + g.substations[i].tigerdam_levels for i in E])

    # dollars
    h_cost = np.array([sum(costs.V(i, l) for i, l in zip(E, row)) for row in h_choices]) / 100
    t_fee = np.array([sum(costs.C(i, l) for i, l in zip(E, row)) for row in t_choices]) / 100
    t_units = t_choices.sum(axis=1)
    prot = np.maximum(h_choices[:, None, :], t_choices[None, :, :])  # (nh, nt, E)

    shed_of = _shed_table(g, E)
    weights = 1 << np.arange(len(E))
    K = len(tree.nodes)
    shape = (len(h_choices),) + (len(t_choices),) * K
    total = np.broadcast_to(h_cost.reshape((-1,) + (1,) * K), shape).copy()
    units = np.zeros(shape[1:], dtype=int)
    for node in tree.nodes:
        k = node.index
        cost_k = Y * node.prob * t_fee[None, :] * np.ones((len(h_choices), 1))
        for s in node.scenarios:
            d = np.array([maps.maps[s.key][i] for i in E], dtype=int)
            code = ((d <= prot) * weights).sum(axis=-1)
            cost_k = cost_k + Y * L * node.prob * s.prob * shed_of[code]
        view = [1] * (K + 1)
        view[0] = len(h_choices)
        view[k + 1] = len(t_choices)
        total += cost_k.reshape(view)
        uview = [1] * K
        uview[k] = len(t_choices)
        units = np.maximum(units, t_units.reshape(uview))
    total += costs.dam_unit_cost / 100 * units[None, ...]

    flat = total.ravel()
    best = flat.min()
    pick = int(np.flatnonzero(flat <= best + TIE_TOL * max(1.0, abs(best)))[0])
    idx = np.unravel_index(pick, shape)

    hard = [0] * ns
    for i, l in zip(E, h_choices[idx[0]]):
        hard[i] = int(l)
    second = {}
    for node in tree.nodes:
        lv = [0] * ns
        for i, l in zip(E, t_choices[idx[node.index + 1]]):
            lv[i] = int(l)
        second[node.index] = tuple(lv)
    n = max((sum(v) for v in second.values()), default=0)
    breakdown, objective, leaves = evaluate_decisions(g, maps, tree, costs, tuple(hard), n, second)
    return BamSolution(FirstStage(tuple(hard), n), second, leaves, breakdown, objective,
                       variant=variant)


def _product(options: list[tuple[int, ...]]) -> np.ndarray:
    rows = list(itertools.product(*options))
    return np.array(rows, dtype=int).reshape(len(rows), len(options))


def _shed_table(g: GridModel, E: list[int]) -> np.ndarray:
    """Minimum shed for every survival pattern of the exposed substations (bit i = survives)."""
    out = np.empty(1 << len(E))
    for code in range(1 << len(E)):
        z = np.ones(len(g.buses), dtype=bool)
        for bit, i in enumerate(E):
            if not code >> bit & 1:
                z[list(g.substations[i].bus_ids)] = False
        out[code] = solve_dispatch(g, z).shed
    return out
