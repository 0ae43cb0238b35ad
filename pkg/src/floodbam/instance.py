"""Instance bundle and a seeded generator of small random instances."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cost import CostParams, default_case_study_costs
from .grid import Branch, Bus, GridModel, Substation, validate_grid
from .scenario import FloodMapSet, HurricaneKey, ScenarioTree, make_tree, validate_floods, validate_tree


@dataclass(frozen=True)
class Instance:
    grid: GridModel
    floods: FloodMapSet
    tree: ScenarioTree
    costs: CostParams
    name: str = "instance"

    def validate(self) -> list[str]:
        return (validate_grid(self.grid) + validate_floods(self.floods, self.grid)
                + validate_tree(self.tree, self.floods) + self.costs.validate(self.grid))

    def with_costs(self, costs: CostParams) -> "Instance":
        return replace(self, costs=costs)

    def with_grid(self, grid: GridModel) -> "Instance":
        return replace(self, grid=grid)


VOLL_GRID = (250, 500, 1000, 2000, 3000, 4000, 5000, 6000)


def random_instance(seed: int, *, max_buses: int = 6, max_branches: int = 8,
                    max_exposed: int = 4, max_nodes: int = 2, max_scenarios: int = 4,
                    levels=(3, 6), commitment_prob: float = 0.15) -> Instance:
    """A connected random grid with flood-exposed substations and a small tree.

    Buses are grouped into substations (occasionally two per substation).
    Level sets are nonempty subsets of ``levels``; flood heights are drawn
    from 0..8 so that protection is sometimes sufficient and sometimes not.
    """
    rng = np.random.default_rng(seed)
    nb = int(rng.integers(3, max_buses + 1))

    # group buses into substations
    sub_of = []
    sid = 0
    j = 0
    while j < nb:
        size = 2 if (j + 1 < nb and rng.random() < 0.25) else 1
        sub_of += [sid] * size
        sid += 1
        j += size
    ns = sid

    # connected topology: random spanning tree plus extra edges
    edges = []
    for j in range(1, nb):
        edges.append((int(rng.integers(0, j)), j))
    pairs = [(a, b) for a in range(nb) for b in range(a + 1, nb) if (a, b) not in edges]
    rng.shuffle(pairs)
    extra = int(rng.integers(0, max(0, min(len(pairs), max_branches - len(edges))) + 1))
    edges += [tuple(pairs[q]) for q in range(extra)]
    branches = []
    for r, (a, b) in enumerate(edges):
        if rng.random() < 0.5:
            a, b = b, a
        branches.append(Branch(r, a, b, float(rng.choice([5.0, 10.0, 20.0])),
                               float(rng.choice([0.3, 0.5, 0.8, 1.5])),
                               float(rng.choice([0.3, 0.6, math.pi / 4]))))

    gen_buses = {0} | {int(v) for v in rng.choice(nb, size=int(rng.integers(0, 2)), replace=False)}
    buses = []
    for j in range(nb):
        demand = float(np.round(rng.uniform(0.05, 0.6), 2)) if j not in gen_buses or rng.random() < 0.3 else 0.0
        gmax = float(np.round(rng.uniform(0.8, 2.0), 2)) if j in gen_buses else 0.0
        gmin = float(np.round(0.2 * gmax, 2)) if j in gen_buses and rng.random() < commitment_prob else 0.0
        buses.append(Bus(j, sub_of[j], demand, gmin, gmax, j == 0))

    n_exp = int(rng.integers(1, min(max_exposed, ns) + 1))
    exposed = set(int(v) for v in rng.choice(ns, size=n_exp, replace=False))
    options = [tuple(levels[a] for a in range(len(levels)) if mask >> a & 1)
               for mask in range(1, 2 ** len(levels))]
    subs = []
    for i in range(ns):
        members = tuple(j for j in range(nb) if sub_of[j] == i)
        if i in exposed:
            hl = options[int(rng.integers(len(options)))]
            tl = options[int(rng.integers(len(options)))]
            subs.append(Substation(i, members, True, hl, tl))
        else:
            subs.append(Substation(i, members))
    grid = GridModel(tuple(buses), tuple(branches), tuple(subs))

    n_nodes = int(rng.integers(1, max_nodes + 1))
    n_scen = [int(rng.integers(2, max_scenarios + 1)) for _ in range(n_nodes)]
    keys = [HurricaneKey(d, c, f) for d in ("NW", "N", "NE") for c in (2, 3, 4, 5) for f in (5, 10)]
    chosen = rng.choice(len(keys), size=min(len(keys), sum(n_scen)), replace=False)
    maps = {}
    for q in chosen:
        heights = [0] * ns
        for i in exposed:
            heights[i] = int(rng.integers(0, 9))
        maps[keys[q]] = tuple(heights)
    key_list = [keys[q] for q in chosen]
    for i in exposed:  # every exposed substation floods somewhere
        if all(maps[k][i] == 0 for k in key_list):
            k0 = key_list[int(rng.integers(len(key_list)))]
            h = list(maps[k0])
            h[i] = int(rng.integers(1, 9))
            maps[k0] = tuple(h)
    floods = FloodMapSet(maps, ns)

    pk = rng.dirichlet(np.ones(n_nodes)) if rng.random() < 0.5 else np.full(n_nodes, 1 / n_nodes)
    nodes = []
    pos = 0
    for k in range(n_nodes):
        ks = key_list[pos:pos + n_scen[k]]
        pos += n_scen[k]
        q = np.full(len(ks), 1 / len(ks))
        nodes.append((float(pk[k]), [(key, float(v)) for key, v in zip(ks, q)]))
    nodes = _normalise(nodes)
    tree = make_tree(nodes)

    costs = default_case_study_costs(subs)
    costs = replace(costs, voll=float(rng.choice(VOLL_GRID)),
                    restoration_hours=float(rng.choice([12.0, 24.0, 48.0])))
    return Instance(grid, floods, tree, costs, name=f"random-{seed}")


def _normalise(nodes):
    """Renormalise so probabilities sum to one to within rounding of the last entry."""
    total = sum(p for p, _ in nodes)
    nodes = [(p / total, s) for p, s in nodes]
    head = sum(p for p, _ in nodes[:-1])
    nodes[-1] = (1.0 - head, nodes[-1][1])
    out = []
    for p, scen in nodes:
        qs = [q for _, q in scen]
        head = sum(qs[:-1])
        scen = [(key, q) for (key, q) in scen[:-1]] + [(scen[-1][0], 1.0 - head)]
        out.append((p, scen))
    return out
