import pytest

from floodbam.instance import random_instance
from floodbam.oracle import SearchSpaceTooLarge, enumerate_optimum, search_space
from floodbam.solve import solve_variant

from conftest import TIGHT, tiny_instance

# Triangle, equal susceptances: around the loop 3 e01 = 2 s1 + s2 with
# e01 <= 0.8, so the intact grid serves s1 = 0.95, s2 = 0.5 (shed 0.05).
INTACT_SHED = 0.05
FLOODED_SHED = 0.7
Y, L = 10, 2_880_000


def _one_storm(height):
    key = ("N", 3, 5)
    return tiny_instance({key: (0, 0, height)}, [(1.0, [(key, 1.0)])])


def test_hand_derived_optimum_prefers_a_dam():
    inst = _one_storm(4)
    unprotected = Y * L * FLOODED_SHED
    hardened = 600_000 + Y * L * INTACT_SHED
    dammed = 6 * 40_000 + Y * 10_000 + Y * L * INTACT_SHED
    assert dammed < hardened < unprotected
    sol = enumerate_optimum(inst.grid, inst.floods, inst.tree, inst.costs)
    assert sol.objective == pytest.approx(dammed, rel=1e-9)
    assert sol.second[0] == (0, 0, 6) and sol.first.n == 6
    assert sol.first.hardening == (0, 0, 0)


def test_hand_derived_no_prep_hardens():
    inst = _one_storm(4)
    sol = enumerate_optimum(inst.grid, inst.floods, inst.tree, inst.costs, "bam_np")
    assert sol.objective == pytest.approx(600_000 + Y * L * INTACT_SHED, rel=1e-9)
    assert sol.first.hardening == (0, 0, 6)


def test_small_flood_uses_the_small_dam():
    inst = _one_storm(3)
    sol = enumerate_optimum(inst.grid, inst.floods, inst.tree, inst.costs)
    assert sol.second[0] == (0, 0, 3) and sol.first.n == 3


def test_search_space_sizes():
    inst = _one_storm(4)
    g, t = inst.grid, inst.tree
    assert search_space(g, t) == 3 * 3
    assert search_space(g, t, "bam_np") == 3
    assert search_space(g, t, "bam_d") == 3


def test_cap_is_enforced():
    inst = random_instance(1)
    with pytest.raises(SearchSpaceTooLarge):
        enumerate_optimum(inst.grid, inst.floods, inst.tree, inst.costs, max_space=1)


def test_argument_errors():
    inst = _one_storm(4)
    with pytest.raises(ValueError, match="unknown variant"):
        enumerate_optimum(inst.grid, inst.floods, inst.tree, inst.costs, "bam_x")
    with pytest.raises(ValueError, match="needs fixed_h"):
        enumerate_optimum(inst.grid, inst.floods, inst.tree, inst.costs, "bam_d")


def test_ties_resolve_to_the_first_enumerated_choice():
    # no flooding at all: every plan that buys nothing costs the same
    inst = _one_storm(0)
    sol = enumerate_optimum(inst.grid, inst.floods, inst.tree, inst.costs)
    assert sol.first.hardening == (0, 0, 0) and sol.second[0] == (0, 0, 0)
    assert sol.objective == pytest.approx(Y * L * INTACT_SHED, rel=1e-9)


@pytest.mark.parametrize("seed", range(100, 104))
def test_oracle_matches_the_milp(seed):
    inst = random_instance(seed)
    o = enumerate_optimum(inst.grid, inst.floods, inst.tree, inst.costs)
    m = solve_variant(inst, cfg=TIGHT)
    assert m.objective == pytest.approx(o.objective, rel=1e-6)
