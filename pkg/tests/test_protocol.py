import itertools
import math

import numpy as np
import pytest

from dbay._fastleaf import SensorPair
from dbay.benchmark import generate_problem
from dbay.dcop import Operator, allocate_functions, build_constraint_graph, build_pseudo_tree
from dbay.exceptions import (
    AgentError,
    InvalidEnvelope,
    LipschitzViolated,
    UnknownParentSample,
    UnknownRecipient,
)
from dbay.protocol import FINAL, SAMPLE, UTILITY, DBayAgent, GridSampler, make_sampler
from dbay.runtime import DBaySolver, MessageBus, Trace, agent_lipschitz, run_to_completion

from conftest import Const, Linear, make_instance


class Recorder:
    """Evaluator that logs every call."""

    def __init__(self, func):
        self.func = func
        self.calls = []

    def __call__(self, *xs):
        self.calls.append(xs)
        return self.func(*xs)


class Bowl:
    """``-(a - 0.3)^2 - (b - a)^2``: slope bounded by 4 in each argument on [0, 1]."""

    def __call__(self, a, b):
        return -((a - 0.3) ** 2) - (b - a) ** 2


def chain(n, evaluator_factory=lambda i: Const(0.0), lipschitz=1.0):
    scopes = [(i, i + 1) for i in range(n - 1)]
    return make_instance(n, scopes, [evaluator_factory(i) for i in range(n - 1)], lipschitz=lipschitz)


def test_leaf_bootstrap_order():
    rec = Recorder(lambda x: 0.0)
    inst = make_instance(1, [(0,)], [rec], domain=(-2.0, 3.0))
    run_to_completion(inst, budgets=3, sampler="ei")
    # the fourth call is the final objective evaluation of the chosen value
    assert [c[0] for c in rec.calls] == [-2.0, 3.0, 0.5, -2.0]


def test_single_agent_sends_nothing():
    inst = make_instance(1, [(0,)], [Linear((1.0,))])
    res = run_to_completion(inst, budgets=5)
    assert res.metrics.total_messages == 0
    assert res.assignment == {0: 1.0}


def test_root_with_three_samples_picks_better_endpoint():
    inst = make_instance(1, [(0,)], [Linear((-2.0,))], lipschitz=2.0)
    assert run_to_completion(inst, budgets=3).assignment == {0: 0.0}


def test_constant_objective_gives_constant_replies():
    inst = chain(2, lambda i: Const(4.0))
    trace = Trace(keep=True)
    run_to_completion(inst, budgets=4, trace=trace)
    assert {e.payload for e in trace.records if e.kind == UTILITY} == {4.0}


def test_childless_sum_of_two_functions():
    inst = make_instance(1, [(0,), (0,)], [Const(2.0), Const(3.0)])
    assert run_to_completion(inst, budgets=3).root_utility == 5.0


@pytest.mark.parametrize("operator, expected", [(Operator.SUM, 7.0), (Operator.MAX, 4.0)])
def test_two_children_aggregate(operator, expected):
    inst = make_instance(
        3, [(0, 1), (0, 2), (1,), (2,)], [Const(0.0), Const(0.0), Const(3.0), Const(4.0)], operator=operator
    )
    t = build_pseudo_tree(build_constraint_graph(inst))
    assert t.children[0] == (1, 2)
    assert run_to_completion(inst, t, budgets=3).root_utility == expected


def test_two_agent_grid_matches_nested_grid_oracle():
    inst = make_instance(2, [(0, 1)], [Bowl()], lipschitz=4.0)
    res = run_to_completion(inst, budgets=9, sampler="grid")
    pts = [i / 8 for i in range(9)]
    best = max(Bowl()(a, b) for a, b in itertools.product(pts, pts))
    assert res.root_utility == best
    assert res.utility == best


def test_mid_tree_agent_equals_brute_force_recursion():
    f = [Bowl(), Bowl()]
    inst = make_instance(3, [(0, 1), (1, 2)], f, lipschitz=4.0)
    res = run_to_completion(inst, budgets=5, sampler="grid")
    pts = [i / 4 for i in range(5)]
    best = max(f[0](a, b) + f[1](b, c) for a, b, c in itertools.product(pts, pts, pts))
    assert res.root_utility == best
    # root value is the first argmax in grid order
    arg = max(itertools.product(pts, pts, pts), key=lambda p: (f[0](p[0], p[1]) + f[1](p[1], p[2]), -p[0]))
    assert res.assignment[0] == arg[0]


@pytest.mark.parametrize("depth, budget", [(2, 3), (3, 4), (4, 3), (5, 2)])
def test_chain_message_counts(depth, budget):
    inst = chain(depth, lambda i: Linear((0.5, 0.5)))
    res = run_to_completion(inst, budgets=budget, sampler="grid")
    expected = sum(budget**k for k in range(1, depth))
    assert res.metrics.messages_by_kind[SAMPLE] == expected
    assert res.metrics.messages_by_kind[UTILITY] == expected
    assert res.metrics.messages_by_kind[FINAL] == depth - 1
    assert res.trace.count == res.metrics.total_messages


def test_two_agent_edge_carries_budget_messages():
    inst = chain(2, lambda i: Linear((1.0, 1.0)))
    trace = Trace(keep=True)
    run_to_completion(inst, budgets=7, sampler="grid", trace=trace)
    samples = [e for e in trace.records if e.kind == SAMPLE]
    assert len(samples) == 7 and all((e.sender, e.recipient) == (0, 1) for e in samples)
    assert [e.seq for e in trace.records] == list(range(1, len(trace.records) + 1))


def test_repeated_sample_gets_identical_reply():
    inst = make_instance(2, [(0, 1)], [Bowl()], lipschitz=4.0)
    t = build_pseudo_tree(build_constraint_graph(inst))
    t = t.with_functions(allocate_functions(inst, t))
    bus = MessageBus()
    leaf = DBayAgent(1, inst, t, bus, budget=6, lipschitz=4.0)
    root = DBayAgent(0, inst, t, bus, budget=3, lipschitz=4.0)
    bus.register(leaf)
    bus.register(root)
    a = root.get_child_utility({0: 0.37})
    b = root.get_child_utility({0: 0.37})
    assert a == b
    assert leaf.samples_taken == 6


def test_unknown_parent_sample_in_final_phase():
    inst = make_instance(2, [(0, 1)], [Bowl()], lipschitz=4.0)
    t = build_pseudo_tree(build_constraint_graph(inst))
    t = t.with_functions(allocate_functions(inst, t))
    leaf = DBayAgent(1, inst, t, MessageBus(), budget=3, lipschitz=4.0)
    with pytest.raises(UnknownParentSample):
        leaf.process_final({0: 0.5})


def test_self_send_and_unknown_recipient_rejected():
    inst = chain(2)
    t = build_pseudo_tree(build_constraint_graph(inst))
    bus = MessageBus()
    bus.register(DBayAgent(0, inst, t, bus, budget=3, lipschitz=1.0))
    with pytest.raises(InvalidEnvelope):
        bus.dispatch(SAMPLE, 0, 0, {})
    with pytest.raises(UnknownRecipient):
        bus.dispatch(SAMPLE, 0, 5, {})


def test_agent_errors_carry_agent_id():
    # the leaf's declared constant is far below the true slope
    inst = make_instance(2, [(0, 1)], [Linear((1.0, 10.0))], lipschitz=0.1)
    with pytest.raises(AgentError) as err:
        run_to_completion(inst, budgets=4)
    assert err.value.agent == 1
    assert isinstance(err.value.cause, LipschitzViolated)
    assert err.value.module == "acquisition"


def test_lipschitz_check_can_be_disabled():
    inst = make_instance(2, [(0, 1)], [Linear((1.0, 10.0))], lipschitz=0.1)
    res = run_to_completion(inst, budgets=4, check_lipschitz=False)
    assert res.utility == pytest.approx(11.0)


def test_samplers():
    assert GridSampler(5).points == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert GridSampler(1).points == [0.5]
    assert make_sampler(("grid", 3), 10, None, None).budget == 3
    with pytest.raises(ValueError):
        make_sampler("random", 3, None, None)


def test_agent_lipschitz_is_normalised():
    inst = make_instance(2, [(0, 1)], lipschitz=2.0, domain=(-180.0, 180.0))
    assert agent_lipschitz(inst, 0) == 720.0


@pytest.mark.parametrize("seed", range(4))
def test_root_utility_matches_final_assignment(seed):
    inst = generate_problem(seed).instance
    res = run_to_completion(inst, budgets=5, seed=seed)
    assert math.isclose(res.utility, res.root_utility, abs_tol=1e-9)
    assert sorted(res.assignment) == list(range(inst.n_variables))


@pytest.mark.parametrize("seed", [0, 3, 7])
def test_compiled_leaves_match_generic_path(seed):
    inst = generate_problem(seed).instance
    a = run_to_completion(inst, budgets=6, fast_leaves=True)
    b = run_to_completion(inst, budgets=6, fast_leaves=False)
    assert a.trace.digest == b.trace.digest
    assert a.assignment == b.assignment
    assert a.metrics.samples_per_agent == b.metrics.samples_per_agent


def test_paired_parent_and_leaf_match_generic_records(monkeypatch):
    calls = []
    run = SensorPair.run
    monkeypatch.setattr(SensorPair, "run", lambda self, s: calls.append(1) or run(self, s))
    inst = generate_problem(11).instance  # a chain, so the last two agents run paired
    runs = [run_to_completion(inst, budgets=4, fast_leaves=f, trace=Trace(keep=True)) for f in (True, False)]
    assert len(calls) == 4**4
    assert [e.to_json() for e in runs[0].trace.records] == [e.to_json() for e in runs[1].trace.records]
    assert [tuple(e) for e in runs[0].trace.records] == [tuple(e) for e in runs[1].trace.records]
    assert runs[0].metrics.as_dict()["messages_by_kind"] == runs[1].metrics.as_dict()["messages_by_kind"]
    assert runs[0].metrics.utility_evaluations == runs[1].metrics.utility_evaluations


def test_paired_path_falls_back_to_report_child_errors():
    inst = generate_problem(11).instance
    leaf = 5  # deepest agent of this chain
    errors = []
    for fast in (True, False):
        with pytest.raises(AgentError) as info:
            run_to_completion(inst, budgets=5, lipschitz={leaf: 1e-3}, fast_leaves=fast)
        errors.append((info.value.agent, str(info.value)))
    assert errors[0] == errors[1] and errors[0][0] == leaf


def test_compact_store_does_not_change_the_run():
    inst = generate_problem(2).instance
    a = run_to_completion(inst, budgets=5, compact=True)
    b = run_to_completion(inst, budgets=5, compact=False)
    assert a.trace.digest == b.trace.digest and a.assignment == b.assignment


def test_replay_is_bit_identical():
    inst = generate_problem(5).instance
    runs = [run_to_completion(inst, budgets=6, trace=Trace(keep=True)) for _ in range(2)]
    assert runs[0].trace.digest == runs[1].trace.digest
    assert [e.to_json() for e in runs[0].trace.records] == [e.to_json() for e in runs[1].trace.records]


def test_root_incumbent_non_decreasing():
    inst = make_instance(2, [(0, 1)], [Bowl()], lipschitz=4.0)
    t = build_pseudo_tree(build_constraint_graph(inst))
    t = t.with_functions(allocate_functions(inst, t))
    bus = MessageBus()
    root = DBayAgent(0, inst, t, bus, budget=12, lipschitz=8.0)
    bus.register(root)
    bus.register(DBayAgent(1, inst, t, bus, budget=5, lipschitz=4.0))
    seen = []
    for _ in range(12):
        root.optimize_local_variables({})
        seen.append(root.store[()].incumbent.y)
    assert seen == sorted(seen)


def test_envelope_json_is_stable():
    trace = Trace(keep=True)
    run_to_completion(chain(2, lambda i: Linear((1.0, 1.0))), budgets=3, sampler="grid", trace=trace)
    first = trace.records[0].to_json()
    assert first == '{"seq":1,"kind":"sample","from":0,"to":1,"payload":{"samples":{"0":0.0}}}'


def test_estimator_front_end():
    inst = generate_problem(0).instance
    est = DBaySolver(budget=4).fit(inst)
    assert est.score(inst) == est.utility_
    assert est.get_params()["budget"] == 4
    with pytest.raises(TypeError):
        DBaySolver().fit("not an instance")
