import random
from fractions import Fraction as F
from itertools import combinations

import pytest

from cautiouspdb.exact_lp import (
    VSTAR,
    BudgetExceeded,
    Infeasible,
    LinearProgram,
    add_event_objective,
    build_world_system,
    interpretation,
    optimize,
    optimize_range,
    optimize_with_point,
    solve_feasible,
    valid_worlds,
)
from cautiouspdb.grounding import build_conflict_hypergraph
from cautiouspdb.model import ProbabilityBound
from conftest import load_fixture


def point(p):
    return ProbabilityBound.point(F(p))


def room(name):
    fx = load_fixture(name)
    return build_conflict_hypergraph(fx.instance, fx.ics)


def test_path_graph_has_five_worlds():
    h = room("room_case2")
    worlds = valid_worlds(h.nodes, h.edges)
    assert set(worlds) == {frozenset(), frozenset({"t1"}), frozenset({"t2"}), frozenset({"t3"}),
                           frozenset({"t1", "t3"})}
    lp = build_world_system(h.marginals, h.edges)
    assert len(lp.variables) == 5
    assert [r.label for r in lp.rows] == ["marginal t1", "marginal t2", "marginal t3", "mass"]


def test_valid_worlds_match_brute_force():
    rng = random.Random(7)
    nodes = [f"t{i}" for i in range(1, 8)]
    for _ in range(30):
        edges = [frozenset(rng.sample(nodes, rng.randint(1, 3))) for _ in range(rng.randint(0, 6))]
        expect = {frozenset(s) for k in range(len(nodes) + 1) for s in combinations(nodes, k)
                  if not any(e <= set(s) for e in edges)}
        assert set(valid_worlds(nodes, edges)) == expect


def test_empty_system_is_feasible():
    lp = build_world_system({}, [])
    assert lp.variables == [frozenset()]
    assert solve_feasible(lp) == {frozenset(): 1}


def test_certain_tuple_conflicting_alone_is_infeasible():
    lp = build_world_system({"t1": point(1)}, [frozenset({"t1"})])
    assert solve_feasible(lp) is None
    with pytest.raises(Infeasible):
        optimize(lp, "min", {})


def test_budget():
    marg = {f"t{i}": point(F(1, 2)) for i in range(5)}
    with pytest.raises(BudgetExceeded, match="5 tuples exceed the world budget of 4"):
        build_world_system(marg, [], budget=4)


def test_case3_range_of_conjunction():
    h = room("room_case3")
    lp = add_event_objective(build_world_system(h.marginals, h.edges), {"t1", "t3"})
    assert optimize(lp, "min") == F(1, 4)
    assert optimize(lp, "max") == F(1, 2)
    assert optimize_range(lp) == (F(1, 4), F(1, 2))


def test_case2_conjunction_is_pinned():
    h = room("room_case2")
    lp = add_event_objective(build_world_system(h.marginals, h.edges), {"t1", "t3"})
    assert optimize_range(lp) == (F(1, 2), F(1, 2))


def test_always_true_event_has_probability_one():
    h = room("room_case3")
    lp = add_event_objective(build_world_system(h.marginals, h.edges), lambda w: True)
    assert optimize_range(lp) == (1, 1)
    lp = add_event_objective(build_world_system(h.marginals, h.edges), lambda w: False)
    assert optimize_range(lp) == (0, 0)


def test_range_marginals_get_two_rows():
    lp = build_world_system({"t1": ProbabilityBound(F(1, 4), F(3, 4))}, [])
    assert [r.sense for r in lp.rows] == [">=", "<=", "="]
    lp = add_event_objective(lp, {"t1"})
    assert optimize_range(lp) == (F(1, 4), F(3, 4))


def test_certificate_is_a_model():
    rng = random.Random(11)
    nodes = [f"t{i}" for i in range(1, 7)]
    checked = 0
    for _ in range(40):
        edges = [frozenset(rng.sample(nodes, rng.randint(2, 3))) for _ in range(rng.randint(1, 5))]
        marg = {n: point(F(rng.randint(0, 4), 8)) for n in nodes}
        lp = build_world_system(marg, edges)
        pt = solve_feasible(lp)
        if pt is None:
            continue
        checked += 1
        assert interpretation(lp, pt).violations(marg, edges) == []
        assert all(isinstance(x, F) and x >= 0 for x in pt.values())
    assert checked > 10


def test_optimum_point_attains_value():
    h = room("room_case3")
    lp = add_event_objective(build_world_system(h.marginals, h.edges), {"t1", "t3"})
    value, pt = optimize_with_point(lp, "max")
    assert pt[VSTAR] == value == F(1, 2)


def test_degenerate_program_terminates():
    # a classic cycling example for the largest-coefficient rule
    lp = LinearProgram()
    for v in ("x1", "x2", "x3", "x4"):
        lp.add_variable(v)
    lp.add_row({"x1": F(1, 4), "x2": -8, "x3": -1, "x4": 9}, "<=", 0)
    lp.add_row({"x1": F(1, 2), "x2": -12, "x3": F(-1, 2), "x4": 3}, "<=", 0)
    lp.add_row({"x3": 1}, "<=", 1)
    value = optimize(lp, "max", {"x1": F(3, 4), "x2": -20, "x3": F(1, 2), "x4": -6})
    assert value == F(5, 4)


def test_bad_sense_rejected():
    with pytest.raises(ValueError):
        LinearProgram().add_row({}, "<", 0)


def test_pinned_leaves_original_untouched():
    h = room("room_case3")
    lp = add_event_objective(build_world_system(h.marginals, h.edges), {"t1", "t3"})
    n = len(lp.rows)
    assert solve_feasible(lp.pinned({VSTAR: 1}, "=", F(3, 8))) is not None
    assert len(lp.rows) == n


def test_dump_is_readable():
    lp = build_world_system({"t1": point(F(1, 2))}, [])
    text = lp.dump()
    assert "marginal t1: x1 = 1/2" in text
    assert "mass: x0 + x1 = 1" in text
