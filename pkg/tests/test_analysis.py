from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from floodbam.analysis import (BLUE, GREEN, ORANGE, WHITE, SweepRow, apply_parameter, cell_color,
                               classify_cells, log_trends, sort_substations_for_report, sweep,
                               value_of_full_coordination, worker_count)
from floodbam.bam import BamSolution, CostBreakdown, FirstStage
from floodbam.milp.bnb import BnbConfig
from floodbam.oracle import enumerate_optimum
from floodbam.scenario import FloodMapSet, HurricaneKey, make_tree

from conftest import TIGHT, tiny_instance

KEYS = [("N", 3, 5), ("N", 3, 10), ("N", 4, 5), ("N", 4, 10)]


def _inst(heights=(2, 4, 5, 7), **kw):
    maps = {k: (0, 0, h) for k, h in zip(KEYS, heights)}
    return tiny_instance(maps, [(0.5, [(k, 0.5) for k in KEYS[:2]]),
                                (0.5, [(k, 0.5) for k in KEYS[2:]])], **kw)


def test_apply_parameter_costs():
    inst = _inst()
    assert apply_parameter(inst, "voll", 250).costs.voll == 250
    assert apply_parameter(inst, "restoration_hours", 12).costs.restoration_hours == 12
    assert apply_parameter(inst, "hardening_cost_per_ft", 50_000).costs.V(2, 6) == 30_000_000


def test_apply_parameter_tmax_rewrites_levels_and_prices_them():
    inst = apply_parameter(_inst(), "tmax", 12)
    s = inst.grid.substations[2]
    assert s.tigerdam_levels == (3, 6, 9, 12)
    assert inst.grid.substations[0].tigerdam_levels == ()
    assert inst.costs.validate(inst.grid) == []
    assert inst.costs.C(2, 12) == inst.costs.C(2, 3)


@pytest.mark.parametrize("param, value", [("tmax", 4.5), ("tmax", 2), ("speed", 1)])
def test_apply_parameter_rejects(param, value):
    with pytest.raises(ValueError):
        apply_parameter(_inst(), param, value)


def test_sweep_rows_keep_input_order_and_format():
    inst = _inst()
    rows = sweep(inst, "voll", [6000, 250, 1000], cfg=TIGHT, workers=1)
    assert [r.value for r in rows] == [6000, 250, 1000]
    assert all(r.ok for r in rows)
    for r in rows:
        assert r.formatted() == [f"{v:.2f}" for v in r.millions]
        assert r.millions[4] == pytest.approx(sum(r.millions[:4]), abs=1e-9)


def test_sweep_validates_before_solving():
    with pytest.raises(ValueError, match="at least one"):
        sweep(_inst(), "voll", [])
    with pytest.raises(ValueError, match="unknown sweep parameter"):
        sweep(_inst(), "wind", [1])


def test_failed_point_is_recorded_not_raised():
    cfg = BnbConfig(node_limit=0)
    rows = sweep(_inst(), "voll", [6000], cfg=cfg, workers=1)
    assert not rows[0].ok and "SolverLimitError" in rows[0].error
    assert rows[0].formatted() == [""] * 5


def test_parallel_sweep_matches_serial():
    inst = _inst()
    serial = sweep(inst, "restoration_hours", [12, 48], cfg=TIGHT, workers=1)
    parallel = sweep(inst, "restoration_hours", [12, 48], cfg=TIGHT, workers=2)
    assert [r.millions for r in serial] == [r.millions for r in parallel]


def test_worker_count_from_environment(monkeypatch):
    monkeypatch.setenv("BAM_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("BAM_THREADS", "zero")
    with pytest.raises(ValueError):
        worker_count()
    monkeypatch.delenv("BAM_THREADS")
    assert worker_count(default=1) == 1


def test_trend_notes():
    a = SweepRow("voll", 250, (1.0, 0, 0, 0, 1.0))
    b = SweepRow("voll", 500, (0.5, 0, 0, 0, 0.5))
    assert len(log_trends([a, b])) == 1
    assert log_trends([b, a]) == []


def test_vofc_zero_without_floods():
    res = value_of_full_coordination(_inst(heights=(0, 0, 0, 0)), cfg=TIGHT)
    assert res["vofc"] == pytest.approx(0.0, abs=1e-6)
    assert res["obj_bam"] == pytest.approx(res["obj_bam_np"], rel=1e-9)


def test_vofc_zero_when_dams_never_pay():
    inst = _inst()
    pricey = replace(inst.costs, dam_unit_cost=10**12,
                     deployment_cost={k: 10**12 for k in inst.costs.deployment_cost})
    inst = inst.with_costs(pricey)
    res = value_of_full_coordination(inst, cfg=TIGHT)
    oracle = enumerate_optimum(inst.grid, inst.floods, inst.tree, inst.costs)
    assert oracle.first.n == 0
    assert res["vofc"] == pytest.approx(0.0, abs=1e-6 * abs(res["obj_bam"]))


def test_vofc_nonnegative_and_uses_no_prep_hardening():
    res = value_of_full_coordination(_inst(heights=(3, 3, 6, 6)), cfg=TIGHT)
    sols = res["solutions"]
    assert sols["bam_d"].first.hardening == sols["bam_np"].first.hardening
    assert res["vofc"] >= -1e-6 * abs(res["obj_bam"])


@pytest.mark.parametrize("mf, dam, color", [(0, 0, WHITE), (5, 0, BLUE), (5, 6, GREEN),
                                            (9, 6, ORANGE), (6, 6, GREEN), (0, 3, GREEN)])
def test_cell_color_examples(mf, dam, color):
    assert cell_color(mf, dam) == color


@given(st.integers(0, 30), st.integers(0, 30))
def test_cell_color_is_total(mf, dam):
    matches = [c for c in (WHITE, BLUE, GREEN, ORANGE) if c == cell_color(mf, dam)]
    assert len(matches) == 1


def _solution(hardening, second):
    return BamSolution(FirstStage(hardening, 0), second, {}, CostBreakdown(0, 0, 0, 0), 0.0)


def test_classify_cells_grid():
    keys = [HurricaneKey("N", 3, 5), HurricaneKey("N", 4, 5), HurricaneKey("NE", 3, 5)]
    maps = FloodMapSet({keys[0]: (0, 2, 5), keys[1]: (0, 9, 0), keys[2]: (0, 0, 0)}, 3)
    tree = make_tree([(0.5, [(keys[0], 0.5), (keys[1], 0.5)]), (0.5, [(keys[2], 1.0)])])
    sol = _solution((0, 0, 6), {0: (0, 6, 0), 1: (0, 0, 0)})
    cells = classify_cells(sol, tree, maps, order=[1, 2])
    assert cells.colors == {(1, 0): ORANGE, (2, 0): BLUE, (1, 1): WHITE, (2, 1): WHITE}
    assert cells.max_flood[1, 0] == 9
    assert cells.mark(2) == "black" and cells.mark(1) == "yellow"
    assert cells.rows()[0] == ["substation", "hardening_mark", "hardening_level", "k0", "k1"]
    assert cells.rows()[2] == ["2", "black", "6", "blue", "white"]


def test_report_order():
    keys = [HurricaneKey("N", c, 5) for c in (1, 2)]
    maps = FloodMapSet({keys[0]: (0, 2, 10, 2, 0), keys[1]: (0, 2, 0, 4, 0)}, 5)
    # means: S1 2.0, S2 5.0, S3 3.0; S0 and S4 never flood
    assert sort_substations_for_report(None, maps) == [1, 3, 2]
    tied = FloodMapSet({keys[0]: (0, 3, 3), keys[1]: (0, 3, 3)}, 3)
    assert sort_substations_for_report(None, tied) == [1, 2]
