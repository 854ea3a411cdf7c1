import random
from fractions import Fraction as F

import pytest

from cautiouspdb.consistency import (
    Outcome,
    check_begd_rule,
    check_clique_rule,
    check_component,
    check_consistency,
    check_fd_rule,
    check_hypertree_rule,
    check_joinfree_rule,
    check_ring_rule,
    oracle_check,
    oracle_consistency,
    pmin_lower_bound,
)
from cautiouspdb.constraint_lang import parse_constraints
from cautiouspdb.grounding import ConflictHypergraph
from cautiouspdb.hypergraph_analysis import Shape
from cautiouspdb.model import ProbabilityBound, load_instance
from conftest import load_fixture
from randomgen import random_hypertree


def clique(probs):
    names = [f"t{i}" for i in range(1, len(probs) + 1)]
    edges = [frozenset((a, b)) for i, a in enumerate(names) for b in names[i + 1:]]
    return ConflictHypergraph.make(dict(zip(names, (ProbabilityBound.point(F(p)) for p in probs))), edges)


def test_clique_rule():
    ok = clique(["1/2", "1/4", "1/4"])
    assert check_clique_rule(ok).consistent
    assert oracle_consistency(ok).consistent
    bad = clique(["3/4", "1/2"])
    r = check_clique_rule(bad)
    assert not r.consistent and r.violated.lhs == F(5, 4)
    assert not oracle_consistency(bad).consistent


def test_triangle_ring_rule():
    # three pairwise-conflicting tuples seen as a ring of three binary edges
    h = clique(["1/2", "1/2", "1/2"])
    r = check_ring_rule(h)
    total = r.conditions[-1]
    assert total.label == "ring total" and total.lhs == F(1, 2) and not total.holds
    assert all(c.holds for c in r.conditions[:-1])
    assert not oracle_consistency(h).consistent


def test_ring_rule_on_fixtures():
    for name, expected in (("ring_tight", False), ("ring_relaxed", True)):
        fx = load_fixture(name)
        v = check_consistency(fx.instance, fx.ics)
        assert v.consistent is expected
        assert oracle_check(fx.instance, fx.ics) is expected


def test_hypertree_rule_is_necessary():
    # any model must leave one tuple of every edge out, for any shape
    rng = random.Random(3)
    for _ in range(200):
        h = random_hypertree(rng, rng.randint(2, 6))
        if not all(c.holds for c in check_hypertree_rule(h).conditions):
            assert not oracle_consistency(h).consistent


def test_joinfree_rule_with_certain_tuples():
    schema = "relation R(A:integer)\nrelation S(A:integer)"
    inst = load_instance(schema, [("R", "A,p\n1,1\n2,1/2\n"), ("S", "A,p\n5,1\n")])
    (ic,) = parse_constraints("![R(x), S(y), x < 2, y > 3]", inst.schemas)
    r = check_joinfree_rule(inst, ic)
    assert not r.consistent
    assert r.violated.nodes == frozenset({"t1", "t3"}) and r.violated.lhs == 2
    assert not check_consistency(inst, [ic]).consistent
    assert oracle_check(inst, [ic]) is False


def test_joinfree_fixture_conditions():
    fx = load_fixture("employee_teams")
    (ic,) = fx.ics
    r = check_joinfree_rule(fx.instance, ic)
    assert len(r.conditions) == 4 and r.consistent


BEGD_SCHEMA = "relation R(A:string, B:string, C:string)\nrelation S(A:string, B:string, C:string)"


def begd(ic, r_rows, s_rows=""):
    inst = load_instance(BEGD_SCHEMA, [("R", "A,B,C,p\n" + r_rows), ("S", "A,B,C,p\n" + s_rows)])
    (c,) = parse_constraints(ic, inst.schemas)
    return inst, c


def test_begd_same_relation_across_atoms():
    # R(k, b, _) is an FD k -> b; two values of b for key a
    inst, ic = begd("![R(k, b1, c1), R(k, b2, c2), b1 != b2]",
                    "a,x,1,1/2\na,x,2,1/4\na,y,1,1/2\nb,z,1,1\n")
    r = check_begd_rule(inst, ic)
    assert [(c.lhs, c.rhs) for c in r.conditions] == [(1, 1)]
    assert r.consistent and oracle_check(inst, [ic]) is True
    inst, ic = begd("![R(k, b1, c1), R(k, b2, c2), b1 != b2]", "a,x,1,3/4\na,y,1,1/2\n")
    assert not check_begd_rule(inst, ic).consistent
    assert oracle_check(inst, [ic]) is False


def test_begd_inner_comparison_same_relation():
    inst, ic = begd("![R(k, b1, c1), R(k, b2, c2), b1 != c1]", "a,x,x,1\na,x,y,1/4\n")
    r = check_begd_rule(inst, ic)
    assert [str(c) for c in r.conditions] == ["edge {t2}: 1/4 > 0"]


def test_begd_across_relations():
    inst, ic = begd("![R(k, b1, c1), S(k, b2, c2), b1 != b2]",
                    "a,x,1,1/2\n", "a,x,1,1\na,y,1,1/2\n")
    r = check_begd_rule(inst, ic)
    assert [(c.nodes, c.lhs) for c in r.conditions] == [(frozenset({"t1", "t3"}), 1)]
    assert r.consistent and oracle_check(inst, [ic]) is True
    inst, ic = begd("![R(k, b1, c1), S(k, b2, c2), b1 != c1]", "a,x,y,3/4\n", "a,x,x,1/2\n")
    r = check_begd_rule(inst, ic)
    assert not r.consistent and oracle_check(inst, [ic]) is False


def test_begd_rule_declines_other_shapes():
    inst, ic = begd("![R(k, b1, c1), R(b2, k, c2), b1 != b2]", "a,x,1,1/2\n")
    assert check_begd_rule(inst, ic) is None


def test_fd_rule_conditions_and_violation():
    fx = load_fixture("person_cities")
    results = check_fd_rule(fx.instance, fx.ics)
    assert [r.conditions[0].lhs for r in results] == [1, F(3, 4), 1]
    raised = (fx.dir / "Person.csv").read_text().replace("K. McCluskey,Fargo,MN,1/4", "K. McCluskey,Fargo,MN,1/2")
    inst = load_instance((fx.dir / "schema.txt").read_text(), [("Person", raised)])
    v = check_consistency(inst, fx.ics)
    assert v.outcome == Outcome.INCONSISTENT
    assert v.violated.lhs == F(5, 4)
    assert oracle_check(inst, fx.ics) is False


def test_fd_rule_needs_single_lhs():
    fx = load_fixture("person_cities")
    ics = parse_constraints(
        "a: ![Person(x1,x2,x3), Person(x4,x2,x5), x3 != x5]\n"
        "b: ![Person(x1,x2,x3), Person(x1,x4,x5), x3 != x5]", fx.instance.schemas)
    with pytest.raises(ValueError):
        check_fd_rule(fx.instance, ics)


@pytest.mark.parametrize("probs, expected", [
    (("1/2", "1/2"), 0),
    (("3/4", "3/4"), F(1, 2)),
    (("1", "1", "1/2"), F(1, 2)),
    (("1/3",), F(1, 3)),
])
def test_pmin_lower_bound(probs, expected):
    marg = {f"t{i}": ProbabilityBound.point(F(p)) for i, p in enumerate(probs)}
    assert pmin_lower_bound(marg, marg) == expected


def test_lowering_probabilities_keeps_consistency():
    rng = random.Random(5)
    for _ in range(100):
        h = random_hypertree(rng, rng.randint(2, 5))
        if not oracle_consistency(h).consistent:
            continue
        lower = {t: ProbabilityBound.point(b.lo * F(rng.randint(0, 4), 4)) for t, b in h.marginals.items()}
        assert oracle_consistency(h, lower).consistent
        assert check_hypertree_rule(h, lower).consistent


def test_over_budget_component_is_unknown():
    fx = load_fixture("cyclic")
    v = check_consistency(fx.instance, fx.ics, budget=3)
    assert v.outcome == Outcome.UNKNOWN
    assert "exceed the world budget of 3" in v.summary()
    shape, result = check_component(clique(["1/4"] * 2), budget=1)
    assert shape == Shape.CLIQUE and result is not None


def test_certificate_requested_for_rule_settled_component():
    fx = load_fixture("room_case2")
    v = check_consistency(fx.instance, fx.ics, certificate=True)
    cert = v.reports[0].certificate
    h_edges = [frozenset({"t1", "t2"}), frozenset({"t2", "t3"})]
    assert cert is not None and cert.violations(fx.instance.marginals(), h_edges) == []


def test_summary_names_rule_and_condition():
    fx = load_fixture("room_case1")
    s = check_consistency(fx.instance, fx.ics).summary()
    assert s.startswith("Inconsistent: hypertree rule on component 1, edge {t1, t2}: 5/4 > 1")


def test_syntactic_rules_can_be_switched_off():
    fx = load_fixture("person_cities")
    v = check_consistency(fx.instance, fx.ics, syntactic=False)
    assert v.consistent and "fd" not in {r.rule for r in v.reports}
