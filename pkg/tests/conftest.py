import logging
import math

import pytest

from floodbam.cost import default_case_study_costs
from floodbam.grid import Branch, Bus, GridModel, Substation
from floodbam.instance import Instance
from floodbam.milp.bnb import BnbConfig
from floodbam.scenario import FloodMapSet, HurricaneKey, make_tree

# solves in tests run to a much tighter gap than the library default
TIGHT = BnbConfig(relative_gap_target=1e-9)


def triangle_grid(exposed=(2,), hardening=(3, 6), tigerdam=(3, 6), capacity=0.8):
    """Bus 0 generates up to 2.0; buses 1 and 2 demand 1.0 and 0.5; one substation per bus."""
    buses = (Bus(0, 0, 0.0, 0.0, 2.0, True), Bus(1, 1, 1.0), Bus(2, 2, 0.5))
    branches = (Branch(0, 0, 1, 10.0, capacity, math.pi / 4),
                Branch(1, 1, 2, 10.0, capacity, math.pi / 4),
                Branch(2, 2, 0, 10.0, capacity, math.pi / 4))
    subs = tuple(
        Substation(i, (i,), True, hardening, tigerdam) if i in exposed else Substation(i, (i,))
        for i in range(3)
    )
    return GridModel(buses, branches, subs)


def tiny_instance(heights_by_key, nodes, exposed=(2,), hardening=(3, 6), tigerdam=(3, 6),
                  **cost_changes):
    g = triangle_grid(exposed, hardening, tigerdam)
    maps = FloodMapSet({HurricaneKey(*k): tuple(v) for k, v in heights_by_key.items()}, 3)
    tree = make_tree([(p, [(HurricaneKey(*k), q) for k, q in scen]) for p, scen in nodes])
    costs = default_case_study_costs(g.substations)
    if cost_changes:
        from dataclasses import replace
        costs = replace(costs, **cost_changes)
    return Instance(g, maps, tree, costs, "tiny")


@pytest.fixture(autouse=True)
def _quiet_generation_warnings():
    logging.getLogger("floodbam.grid").setLevel(logging.ERROR)
    yield
