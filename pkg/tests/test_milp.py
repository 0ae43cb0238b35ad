import math

import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, milp

from floodbam.milp.backends import backend_solve
from floodbam.milp.bnb import BnbConfig, MilpStatus, solve_milp
from floodbam.milp.lpformat import read_lp, write_lp
from floodbam.milp.model import EQ, GE, LE, ModelBuilder
from floodbam.milp.propagate import Propagator
from floodbam.milp.simplex import LpStatus, solve_lp


def _model(c, rows, bounds, integer=None, const=0.0):
    mb = ModelBuilder()
    for j, (lo, hi) in enumerate(bounds):
        mb.add_var(f"x{j}", lo, hi, bool(integer and integer[j]), c[j])
    for i, (terms, sense, rhs) in enumerate(rows):
        mb.add_row(f"r{i}", [(j, a) for j, a in enumerate(terms) if a], sense, rhs)
    mb.obj_const = const
    return mb.build()


def _random_model(rng, n=None, m=None, integer_share=0.6):
    n = n or int(rng.integers(2, 9))
    m = m or int(rng.integers(1, 8))
    c = rng.integers(-9, 10, n).astype(float)
    rows = []
    x0 = rng.integers(0, 4, n).astype(float)  # keeps most instances feasible
    for _ in range(m):
        a = rng.integers(-5, 6, n).astype(float)
        a[rng.random(n) < 0.3] = 0.0
        sense = [LE, GE, EQ][int(rng.integers(0, 3)) if rng.random() < 0.9 else 2]
        act = float(a @ x0)
        rhs = act + (rng.integers(0, 5) if sense == LE else -rng.integers(0, 5) if sense == GE else 0)
        rows.append((a, sense, float(rhs)))
    bounds = [(0.0, float(rng.integers(3, 8))) for _ in range(n)]
    integer = [bool(rng.random() < integer_share) for _ in range(n)]
    return _model(c, rows, bounds, integer)


def _scipy_constraints(model):
    lo = np.array([-np.inf if s == LE else r for s, r in zip(model.sense, model.rhs)])
    hi = np.array([np.inf if s == GE else r for s, r in zip(model.sense, model.rhs)])
    return LinearConstraint(model.A, lo, hi)


# LP


def test_lp_lower_bound_is_optimum():
    res = solve_lp(_model([1.0], [([1.0], GE, 3.0)], [(-math.inf, math.inf)]))
    assert res.status is LpStatus.OPTIMAL
    assert res.objective == pytest.approx(3.0)


def test_lp_unbounded():
    res = solve_lp(_model([-1.0], [], [(0.0, math.inf)]))
    assert res.status is LpStatus.UNBOUNDED


def test_lp_infeasible():
    res = solve_lp(_model([1.0, 1.0], [([1.0, 1.0], LE, 1.0), ([1.0, 1.0], GE, 2.0)],
                          [(0, 5), (0, 5)]))
    assert res.status is LpStatus.INFEASIBLE


def test_lp_transport_hand_solution():
    # ship 4 units from two sources with capacity 3 each; costs 2 and 3 per unit.
    # Hand simplex: fill the cheaper source (3 units), the rest from the dearer one.
    res = solve_lp(_model([2.0, 3.0], [([1.0, 1.0], GE, 4.0)], [(0, 3), (0, 3)]))
    assert res.objective == pytest.approx(9.0)
    np.testing.assert_allclose(res.x, [3.0, 1.0], atol=1e-9)


def test_lp_objective_constant_is_added():
    res = solve_lp(_model([1.0], [], [(2.0, 5.0)], const=10.0))
    assert res.objective == pytest.approx(12.0)


def test_lp_matches_highs_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(150):
        model = _random_model(rng, integer_share=0.0)
        ours = solve_lp(model)
        res = milp(model.obj, integrality=np.zeros(model.num_vars),
                   bounds=Bounds(model.lb, model.ub), constraints=[_scipy_constraints(model)])
        if res.status == 2:
            assert ours.status is LpStatus.INFEASIBLE
            continue
        assert ours.status is LpStatus.OPTIMAL
        assert ours.objective == pytest.approx(res.fun, rel=1e-9, abs=1e-8)
        assert ours.primal_violation <= 1e-8
        assert ours.duality_gap <= 1e-6 * max(1.0, abs(ours.objective))


def test_lp_is_deterministic():
    rng = np.random.default_rng(3)
    model = _random_model(rng, n=8, m=7, integer_share=0.0)
    a, b = solve_lp(model), solve_lp(model)
    assert a.status == b.status
    if a.optimal:
        np.testing.assert_array_equal(a.x, b.x)
        assert a.iterations == b.iterations


# MILP


def test_knapsack():
    model = _model([-6.0, -10.0], [([3.0, 4.0], LE, 6.0)], [(0, 1), (0, 1)], [True, True])
    res = solve_milp(model)
    assert res.status is MilpStatus.OPTIMAL
    assert -res.objective == pytest.approx(10.0)
    np.testing.assert_array_equal(res.x, [0.0, 1.0])


def test_totally_unimodular_flow_needs_no_branching():
    # min-cost flow 0 -> 3 of 2 units over arcs 01, 02, 13, 23, 12 (node-arc incidence is TU)
    arcs = [(0, 1, 1.0), (0, 2, 4.0), (1, 3, 5.0), (2, 3, 1.0), (1, 2, 1.0)]
    mb = ModelBuilder()
    for a, (u, v, cost) in enumerate(arcs):
        mb.add_var(f"f{a}", 0, 1.5 if a == 0 else 2, True, cost)
    supply = {0: 2.0, 3: -2.0}
    for node in range(4):
        terms = [(a, 1.0) for a, (u, _, _) in enumerate(arcs) if u == node]
        terms += [(a, -1.0) for a, (_, v, _) in enumerate(arcs) if v == node]
        mb.add_row(f"n{node}", terms, EQ, supply.get(node, 0.0))
    res = solve_milp(mb.build())
    assert res.status is MilpStatus.OPTIMAL
    assert res.stats.nodes == 1
    assert np.all(res.x == np.round(res.x))


@pytest.mark.parametrize("order", ["best_bound", "depth_first"])
@pytest.mark.parametrize("rule", ["most_fractional", "pseudo_cost"])
def test_milp_matches_highs_on_random_instances(order, rule):
    rng = np.random.default_rng(11)
    cfg = BnbConfig(branching_rule=rule, node_order=order)
    for _ in range(60):
        model = _random_model(rng)
        ours = solve_milp(model, cfg)
        ref = milp(model.obj, integrality=model.integer.astype(int),
                   bounds=Bounds(model.lb, model.ub), constraints=[_scipy_constraints(model)])
        if ref.status == 2:
            assert ours.status is MilpStatus.INFEASIBLE
            continue
        assert ours.status is MilpStatus.OPTIMAL
        assert ours.objective == pytest.approx(ref.fun, rel=1e-6, abs=1e-6)
        assert np.all(ours.x[model.integer] == np.round(ours.x[model.integer]))
        assert model.row_violation(ours.x).max(initial=0.0) <= 1e-6
        assert model.bound_violation(ours.x) <= 1e-9


def test_lower_bound_trace_is_monotone_and_below_incumbents():
    rng = np.random.default_rng(5)
    for _ in range(40):
        res = solve_milp(_random_model(rng, n=8, m=6))
        lbs = res.stats.lower_bounds
        assert all(b >= a - 1e-9 * max(1.0, abs(a)) for a, b in zip(lbs, lbs[1:]))
        incs = res.stats.incumbent_values
        assert all(b <= a for a, b in zip(incs, incs[1:]))
        assert all(lo <= up + 1e-9 * max(1.0, abs(up)) for lo, up in zip(lbs, incs))


def test_milp_is_deterministic():
    rng = np.random.default_rng(21)
    model = _random_model(rng, n=8, m=6)
    a, b = solve_milp(model), solve_milp(model)
    assert a.status == b.status and a.stats.nodes == b.stats.nodes
    if a.has_solution:
        np.testing.assert_array_equal(a.x, b.x)


def test_node_limit_reports_limit_status():
    # a knapsack whose relaxation is fractional needs more than one node
    w = [5.0, 7.0, 4.0, 3.0, 8.0, 6.0]
    v = [-9.0, -11.0, -6.0, -5.0, -12.0, -8.0]
    model = _model(v, [(w, LE, 17.0)], [(0, 1)] * 6, [True] * 6)
    full = solve_milp(model)
    assert full.stats.nodes > 1
    res = solve_milp(model, BnbConfig(node_limit=1))
    assert res.status in (MilpStatus.LIMIT_FEASIBLE, MilpStatus.LIMIT_UNKNOWN)
    if res.has_solution:
        assert res.best_bound <= full.objective + 1e-9


def test_infeasible_milp():
    model = _model([1.0], [([2.0], EQ, 1.0)], [(0, 3)], [True])
    assert solve_milp(model).status is MilpStatus.INFEASIBLE


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        BnbConfig(integrality_tol=0)
    with pytest.raises(ValueError):
        BnbConfig(branching_rule="strong")


# backends


def test_backend_embedded_is_solve_milp():
    model = _model([-6.0, -10.0], [([3.0, 4.0], LE, 6.0)], [(0, 1), (0, 1)], [True, True])
    a = backend_solve(model, "embedded")
    b = solve_milp(model)
    assert a.objective == b.objective and a.stats.nodes == b.stats.nodes


def test_backends_agree():
    rng = np.random.default_rng(99)
    for _ in range(30):
        model = _random_model(rng)
        a = backend_solve(model, "embedded")
        b = backend_solve(model, "highs")
        assert a.status == b.status
        if a.has_solution:
            assert a.objective == pytest.approx(b.objective, rel=1e-6, abs=1e-6)


def test_unknown_backend():
    model = _model([1.0], [], [(0, 1)])
    with pytest.raises(ValueError, match="nope"):
        backend_solve(model, "nope")


# propagation


def test_propagation_fixes_collapsed_continuous_domain_exactly():
    # a >= z1 + z2 - 1 and a <= z1 with z fixed to 1: a must be exactly 1
    mb = ModelBuilder()
    z1 = mb.add_var("z1", 1, 1, True)
    z2 = mb.add_var("z2", 1, 1, True)
    a = mb.add_var("a", 0, 1)
    mb.add_row("ge", [(a, 1.0), (z1, -1.0), (z2, -1.0)], GE, -1)
    mb.add_row("le", [(a, 1.0), (z1, -1.0)], LE, 0)
    ok, lb, ub = Propagator(mb.build()).run(np.array([1.0, 1.0, 0.0]), np.array([1.0, 1.0, 1.0]))
    assert ok and lb[a] == 1.0 and ub[a] == 1.0


def test_propagation_detects_infeasibility():
    model = _model([0.0, 0.0], [([1.0, 1.0], GE, 5.0)], [(0, 2), (0, 2)], [True, True])
    ok, _, _ = Propagator(model).run(model.lb, model.ub)
    assert not ok


def test_propagation_never_cuts_off_optimum():
    rng = np.random.default_rng(8)
    for _ in range(60):
        model = _random_model(rng)
        ref = milp(model.obj, integrality=model.integer.astype(int),
                   bounds=Bounds(model.lb, model.ub), constraints=[_scipy_constraints(model)])
        ok, lb, ub = Propagator(model).run(model.lb, model.ub)
        if ref.status == 0:
            assert ok
            assert np.all(ref.x >= lb - 1e-7) and np.all(ref.x <= ub + 1e-7)


# LP format


def test_lp_format_round_trip():
    rng = np.random.default_rng(4)
    for _ in range(10):
        model = _random_model(rng)
        mb = ModelBuilder()
        for j in range(model.num_vars):
            mb.add_var(f"h(i{j},l3)", model.lb[j], model.ub[j], bool(model.integer[j]),
                       model.obj[j], 1, "h", (j, 3))
        A = model.A.tocsr()
        for i in range(model.num_rows):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            mb.add_row(f"row{i}", list(zip(A.indices[lo:hi], A.data[lo:hi])), model.sense[i],
                       model.rhs[i])
        mb.obj_const = 12.5
        src = mb.build()
        back = read_lp(write_lp(src))
        assert back.var_names == src.var_names
        assert back.sense == src.sense and back.row_names == src.row_names
        np.testing.assert_array_equal(back.lb, src.lb)
        np.testing.assert_array_equal(back.ub, src.ub)
        np.testing.assert_array_equal(back.integer, src.integer)
        np.testing.assert_array_equal(back.obj, src.obj)
        np.testing.assert_array_equal(back.rhs, src.rhs)
        assert (back.A != src.A).nnz == 0
        assert back.obj_const == src.obj_const
        assert back.meta[src.var_names[0]].symbol == "h"
        assert back.meta[src.var_names[0]].index == (0, 3)


def test_singular_basis_triggers_strict_resolve(monkeypatch):
    import floodbam.milp.simplex as simplex

    calls = {"n": 0}
    original = simplex._solve

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 1:
            raise np.linalg.LinAlgError("Factor is exactly singular")
        return original(*args, **kwargs)

    monkeypatch.setattr(simplex, "_solve", flaky)
    model = _model([2.0, 3.0], [([1.0, 1.0], GE, 4.0)], [(0, 3), (0, 3)])
    res = simplex.solve_lp(model)
    assert res.optimal and calls["n"] == 2
    assert res.objective == pytest.approx(9.0)
