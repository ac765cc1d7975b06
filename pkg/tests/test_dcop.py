import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dbay.dcop import (
    ConstraintGraph,
    ContinuousDomain,
    DcopInstance,
    Operator,
    UtilityFunction,
    allocate_functions,
    build_constraint_graph,
    build_pseudo_forest,
    build_pseudo_tree,
    evaluate_objective,
)
from dbay.exceptions import (
    DisconnectedGraph,
    IncompleteAssignment,
    InvalidInstance,
    ScopeNotOnBranch,
)

from conftest import FIVE_AGENT_EDGES, Const, Linear, make_instance


def test_domain_rejects_empty_interval():
    with pytest.raises(InvalidInstance):
        ContinuousDomain(1.0, 1.0)


def test_domain_normalize_roundtrip_hits_endpoints():
    d = ContinuousDomain(-180.0, 180.0)
    assert d.denormalize(0.0) == -180.0
    assert d.denormalize(1.0) == 180.0
    assert d.denormalize(0.5) == 0.0
    assert d.normalize(90.0) == 0.75


def test_domain_grid_includes_endpoints():
    g = ContinuousDomain(-180.0, 180.0).grid(5)
    assert g.tolist() == [-180.0, -90.0, 0.0, 90.0, 180.0]
    assert ContinuousDomain(0.0, 2.0).grid(1).tolist() == [1.0]


def test_instance_requires_one_variable_per_agent():
    with pytest.raises(InvalidInstance):
        DcopInstance((0, 1), (ContinuousDomain(0, 1),), ())


def test_scope_must_reference_known_variables():
    f = UtilityFunction(0, (0, 3), Const(1.0), (1.0, 1.0))
    with pytest.raises(InvalidInstance):
        DcopInstance((0, 1), (ContinuousDomain(0, 1), ContinuousDomain(0, 1)), (f,))


def test_function_scope_duplicate_rejected():
    with pytest.raises(InvalidInstance):
        UtilityFunction(0, (1, 1), Const(1.0), (1.0, 1.0))


def test_single_binary_function_gives_one_edge():
    g = build_constraint_graph(make_instance(2, [(0, 1)]))
    assert g.edges == ((0, 1),)


def test_no_functions_gives_edgeless_graph():
    g = build_constraint_graph(make_instance(3, []))
    assert g.edges == ()


def test_five_agent_graph_edges(five_agent_instance):
    g = build_constraint_graph(five_agent_instance)
    assert g.edges == tuple(sorted(FIVE_AGENT_EDGES))


def test_path_graph_is_chain():
    t = build_pseudo_tree(build_constraint_graph(make_instance(3, [(0, 1), (1, 2)])))
    assert t.root == 0
    assert t.children == {0: (1,), 1: (2,), 2: ()}
    assert all(not v for v in t.pseudo_parents.values())


def test_triangle_has_pseudo_edge():
    t = build_pseudo_tree(build_constraint_graph(make_instance(3, [(0, 1), (1, 2), (0, 2)])))
    assert t.parent == {0: None, 1: 0, 2: 1}
    assert t.pseudo_parents[2] == (0,)
    assert t.pseudo_children[0] == (2,)


def test_five_agent_hierarchy(five_agent_instance):
    t = build_pseudo_tree(build_constraint_graph(five_agent_instance))
    assert t.children[0] == (1, 2)
    assert t.children[2] == (3, 4)
    assert t.pseudo_parents[3] == (0,)
    assert t.pseudo_children[0] == (3,)
    assert t.order == (0, 1, 2, 3, 4)


def test_disconnected_graph_raises():
    g = build_constraint_graph(make_instance(4, [(0, 1), (2, 3)]))
    with pytest.raises(DisconnectedGraph) as err:
        build_pseudo_tree(g)
    assert err.value.components == [(0, 1), (2, 3)]


def test_forest_covers_components():
    forest = build_pseudo_forest(make_instance(4, [(0, 1), (2, 3), (3,)]))
    assert [t.root for t in forest] == [0, 2]
    assert sum(len(t.functions_of(a)) for t in forest for a in t.order) == 3


def test_unary_function_is_local():
    inst = make_instance(2, [(1,), (0, 1)])
    t = build_pseudo_tree(build_constraint_graph(inst))
    alloc = allocate_functions(inst, t)
    assert [f.id for f in alloc[1][0]] == [0]


def test_binary_function_goes_to_child_shared():
    inst = make_instance(2, [(0, 1)])
    t = build_pseudo_tree(build_constraint_graph(inst))
    alloc = allocate_functions(inst, t)
    assert alloc[0] == ((), ())
    assert [f.id for f in alloc[1][1]] == [0]


def test_ternary_function_on_branch_goes_to_deepest(five_agent_instance):
    inst = make_instance(5, FIVE_AGENT_EDGES + [(0, 2, 3)])
    t = build_pseudo_tree(build_constraint_graph(inst))
    alloc = allocate_functions(inst, t)
    assert 5 in [f.id for f in alloc[3][1]]


def test_scope_across_branches_rejected(five_agent_instance):
    inst = make_instance(5, FIVE_AGENT_EDGES)
    t = build_pseudo_tree(build_constraint_graph(inst))
    bad = make_instance(5, FIVE_AGENT_EDGES + [(1, 4)])
    with pytest.raises(ScopeNotOnBranch):
        allocate_functions(bad, t)


def test_objective_empty_sum_is_zero():
    assert evaluate_objective(make_instance(2, []), {0: 0.1, 1: 0.2}) == 0.0


def test_objective_max_operator():
    inst = make_instance(2, [(0,), (1,)], [Const(2.0), Const(5.0)], operator=Operator.MAX)
    assert evaluate_objective(inst, {0: 0.0, 1: 0.0}) == 5.0


def test_objective_incomplete_assignment():
    inst = make_instance(2, [(0, 1)])
    with pytest.raises(IncompleteAssignment):
        evaluate_objective(inst, {0: 0.5})


def random_connected_graph(rnd, n):
    edges = set()
    for v in range(1, n):
        edges.add((rnd.randrange(v), v))
    for a, b in itertools.combinations(range(n), 2):
        if rnd.random() < 0.25:
            edges.add((a, b))
    return ConstraintGraph(tuple(range(n)), tuple(sorted(edges)))


def test_pseudo_tree_edges_join_ancestor_descendant():
    rnd = random.Random(7)
    for _ in range(1000):
        n = rnd.randint(1, 12)
        g = random_connected_graph(rnd, n)
        t = build_pseudo_tree(g)
        assert sum(p is None for p in t.parent.values()) == 1
        for a, b in g.edges:
            assert t.is_ancestor(a, b) or t.is_ancestor(b, a)
        assert sorted(t.order) == list(range(n))


def test_function_partition_and_determinism():
    rnd = random.Random(11)
    for _ in range(200):
        n = rnd.randint(2, 8)
        g = random_connected_graph(rnd, n)
        scopes = [e for e in g.edges] + [(rnd.randrange(n),) for _ in range(3)]
        inst = make_instance(n, scopes)
        t1 = build_pseudo_tree(build_constraint_graph(inst))
        t2 = build_pseudo_tree(build_constraint_graph(inst))
        assert t1 == t2
        alloc = allocate_functions(inst, t1)
        ids = sorted(f.id for loc, sh in alloc.values() for f in loc + sh)
        assert ids == list(range(len(scopes)))
        for a, (_, shared) in alloc.items():
            for f in shared:
                others = set(inst.scope_agents(f)) - {a}
                assert others <= set(t1.ancestors(a))


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8), st.randoms(use_true_random=False))
def test_sum_objective_is_permutation_invariant(values, rnd):
    n = len(values)
    scopes = [(i,) for i in range(n)]
    inst = make_instance(n, scopes, [Const(v) for v in values])
    perm = list(range(n))
    rnd.shuffle(perm)
    shuffled = make_instance(n, [scopes[i] for i in perm], [Const(values[i]) for i in perm])
    a = {i: 0.0 for i in range(n)}
    assert math.isclose(evaluate_objective(inst, a), evaluate_objective(shuffled, a), abs_tol=1e-12)


def test_agent_lipschitz_sums_slopes():
    spec = [((0, 1), (1.0, 2.0)), ((1, 2), (3.0, 4.0)), ((1,), (5.0,))]
    f = [UtilityFunction(i, s, Linear(c), c) for i, (s, c) in enumerate(spec)]
    inst = DcopInstance((0, 1, 2), [ContinuousDomain(0, 1)] * 3, tuple(f))
    assert inst.agent_lipschitz(1) == 2.0 + 3.0 + 5.0
    assert inst.agent_lipschitz(0) == 1.0


def test_lipschitz_spot_check_for_linear_function(rng):
    f = UtilityFunction(0, (0, 1), Linear((0.5, -2.0)), (0.5, 2.0))
    for _ in range(200):
        a, b = rng.uniform(0, 1, 2), rng.uniform(0, 1, 2)
        assert abs(f(*a) - f(*b)) <= 0.5 * abs(a[0] - b[0]) + 2.0 * abs(a[1] - b[1]) + 1e-12


def test_evaluate_grid_falls_back_to_vectorize():
    f = UtilityFunction(0, (0, 1), Linear((1.0, 1.0)), (1.0, 1.0))
    out = f.evaluate_grid(np.array([[0.0], [1.0]]), np.array([[0.0, 0.5]]))
    assert out.tolist() == [[0.0, 0.5], [1.0, 1.5]]
