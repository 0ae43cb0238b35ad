import math

import pytest
from hypothesis import given, settings, strategies as st

from floodbam.grid import (Branch, Bus, GridFormatError, GridModel, Substation, build_adjacency,
                           grid_from_dict, grid_to_dict, validate_grid)
from floodbam.instance import random_instance

from conftest import triangle_grid


def _line(*pairs, n=None):
    n = n or 1 + max(max(p) for p in pairs)
    buses = tuple(Bus(j, j, 0.1, 0.0, 1.0 if j == 0 else 0.0, j == 0) for j in range(n))
    branches = tuple(Branch(r, a, b, 5.0, 1.0, 0.5) for r, (a, b) in enumerate(pairs))
    return GridModel(buses, branches, tuple(Substation(j, (j,)) for j in range(n)))


def test_triangle_is_valid():
    assert validate_grid(triangle_grid()) == []


def test_two_slack_buses_reported_once():
    g = triangle_grid()
    buses = (g.buses[0], Bus(1, 1, 1.0, is_slack=True), g.buses[2])
    problems = validate_grid(GridModel(buses, g.branches, g.substations))
    assert problems == ["multiple slack buses"]


def test_bus_in_two_substations():
    g = triangle_grid(exposed=())
    subs = (Substation(0, (0,)), Substation(1, (1, 2)), Substation(2, (2,)))
    problems = validate_grid(GridModel(g.buses, g.branches, subs))
    assert problems == ["bus 2 in 2 substations"]


@pytest.mark.parametrize("change, fragment", [
    (dict(susceptance=0.0), "susceptance"),
    (dict(capacity=-1.0), "capacity"),
    (dict(max_angle_diff=7.0), "max_angle_diff"),
    (dict(tail=0), "head equals tail"),
])
def test_branch_rules(change, fragment):
    g = triangle_grid()
    fields = dict(id=0, head=0, tail=1, susceptance=10.0, capacity=0.8, max_angle_diff=0.5)
    fields.update(change)
    bad = (Branch(**fields),) + g.branches[1:]
    problems = validate_grid(GridModel(g.buses, bad, g.substations))
    assert len(problems) == 1 and fragment in problems[0]


def test_level_rules():
    g = triangle_grid()
    subs = (Substation(0, (0,), False, (3,)), g.substations[1],
            Substation(2, (2,), True, (6, 3), (3,)))
    problems = validate_grid(GridModel(g.buses, g.branches, subs))
    assert any("non-exposed" in p for p in problems)
    assert any("strictly increasing" in p for p in problems)


def test_generation_shortfall_warns_but_is_valid(caplog):
    g = triangle_grid()
    buses = (Bus(0, 0, 0.0, 0.0, 0.5, True),) + g.buses[1:]
    with caplog.at_level("WARNING", logger="floodbam.grid"):
        assert validate_grid(GridModel(buses, g.branches, g.substations)) == []
    assert "below total demand" in caplog.text


def test_level_maxima():
    s = Substation(0, (0,), True, (3, 6, 9), (3, 6))
    assert (s.hardening_max, s.tigerdam_max) == (9, 6)
    assert Substation(1, (1,)).hardening_max == 0


def test_adjacency_single_branch():
    out, inc = build_adjacency(_line((0, 1)))
    assert out == ((0,), ()) and inc == ((), (0,))


def test_adjacency_directed_cycle():
    out, inc = build_adjacency(_line((0, 1), (1, 2), (2, 0)))
    assert all(len(o) == 1 and len(i) == 1 for o, i in zip(out, inc))


def test_adjacency_outward_star():
    out, inc = build_adjacency(_line((0, 1), (0, 2), (0, 3)))
    assert len(out[0]) == 3 and inc[0] == ()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_adjacency_partitions_branches(seed):
    g = random_instance(seed).grid
    out, inc = build_adjacency(g)
    assert sorted(r for o in out for r in o) == list(range(len(g.branches)))
    assert sorted(r for i in inc for r in i) == list(range(len(g.branches)))
    for r in g.branches:
        assert r.id in out[r.head] and r.id in inc[r.tail]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_dict_round_trip(seed):
    g = random_instance(seed).grid
    back = grid_from_dict(grid_to_dict(g))
    assert back == g
    assert back.substation_labels == g.substation_labels


def test_file_labels_are_remapped_to_dense_ids():
    doc = {
        "substations": [{"id": "S9"}, {"id": "S4", "flood_exposed": True,
                                       "hardening_levels": [3], "tigerdam_levels": [3]}],
        "buses": [{"id": 17, "substation": "S9", "demand": 0.0, "gen_max": 1.0, "slack": True},
                  {"id": 3, "substation": "S4", "demand": 0.4}],
        "branches": [{"id": "a", "head": 17, "tail": 3, "susceptance": 5.0, "capacity": 1.0,
                      "max_angle_diff": 0.5}],
    }
    g = grid_from_dict(doc)
    assert g.branches[0].head == 0 and g.branches[0].tail == 1
    assert g.substation_labels == ("S9", "S4") and g.bus_labels == (17, 3)
    assert g.exposed == (1,)


@pytest.mark.parametrize("doc, fragment", [
    ({"buses": [], "extra": 1}, "unknown keys"),
    ({"substations": [{"id": 0}], "buses": [{"id": 0, "substation": 0, "demand": 1, "color": 2}]},
     "unknown keys"),
    ({"substations": [{"id": 0}], "buses": [{"id": 0, "substation": 5, "demand": 1}]},
     "unknown substation"),
    ({"substations": [{"id": 0, "hardening_levels": [2.5]}]}, "integers"),
])
def test_format_errors(doc, fragment):
    with pytest.raises(GridFormatError, match=fragment):
        grid_from_dict(doc)


def test_triangle_totals():
    g = triangle_grid()
    assert g.total_demand == pytest.approx(1.5)
    assert g.slack == 0 and g.exposed == (2,)
    assert math.isclose(g.branches[0].max_angle_diff, math.pi / 4)
