"""Deterministic in-process message bus, trace recording and the solver front end.

Delivery is synchronous: :meth:`MessageBus.dispatch` runs the recipient's
handler to completion before returning, so messages between any pair of
agents arrive in send order and a run is a pure function of its inputs.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

from sklearn.base import BaseEstimator

from .acquisition import AcquisitionParams
from .dcop import DcopInstance, PseudoTree, allocate_functions, build_pseudo_forest, evaluate_objective
from .exceptions import AgentError, DBayError, InvalidEnvelope, UnknownRecipient
from .protocol import FINAL, SAMPLE, UTILITY, DBayAgent

__all__ = [
    "Envelope",
    "RunMetrics",
    "Trace",
    "MessageBus",
    "RunResult",
    "agent_lipschitz",
    "run_to_completion",
    "DBaySolver",
    "read_trace",
]


def _num(v: float) -> str:
    if math.isfinite(v):
        return repr(float(v))
    return "NaN" if v != v else ("Infinity" if v > 0 else "-Infinity")


def _encode_payload(kind: str, payload) -> str:
    if kind == UTILITY:
        return '{"utility":' + _num(payload) + "}"
    name = "samples" if kind == SAMPLE else "assignments"
    body = ",".join(['"%d":%r' % (a, float(v)) for a, v in sorted(payload.items())])
    if "n" in body:  # inf or nan slipped in; spell them the JSON way
        body = ",".join([f'"{a}":{_num(v)}' for a, v in sorted(payload.items())])
    return '{"' + name + '":{' + body + "}}"


class Envelope(NamedTuple):
    seq: int
    kind: str
    sender: int
    recipient: int
    payload: object

    def to_json(self) -> str:
        return (
            f'{{"seq":{self.seq},"kind":"{self.kind}","from":{self.sender},'
            f'"to":{self.recipient},"payload":{_encode_payload(self.kind, self.payload)}}}'
        )


@dataclass
class RunMetrics:
    samples_per_agent: dict = field(default_factory=dict)
    messages_by_kind: Counter = field(default_factory=Counter)
    utility_evaluations: int = 0
    wall_time: float = 0.0

    @property
    def total_samples(self) -> int:
        return sum(self.samples_per_agent.values())

    @property
    def total_messages(self) -> int:
        return sum(self.messages_by_kind.values())

    def as_dict(self) -> dict:
        return {
            "samples_per_agent": {str(k): v for k, v in sorted(self.samples_per_agent.items())},
            "messages_by_kind": {k: self.messages_by_kind.get(k, 0) for k in (SAMPLE, UTILITY, FINAL)},
            "utility_evaluations": self.utility_evaluations,
            "wall_time": self.wall_time,
        }


class Trace:
    """Running SHA-256 over newline-delimited envelope records.

    ``keep`` retains the envelopes in memory; ``sink`` (a text file object)
    receives every record line. Millions of messages are routine, so neither
    is on by default.
    """

    def __init__(self, keep: bool = False, sink=None, header: Mapping | None = None):
        self._hash = hashlib.sha256()
        self._pending = []
        self.count = 0
        self.keep = keep
        self.records = []
        self.sink = sink
        if sink is not None and header is not None:
            sink.write(json.dumps({"header": header}, sort_keys=True) + "\n")

    def record(self, env: Envelope) -> None:
        self._pending.append(env.to_json())
        self.count += 1
        if self.keep:
            self.records.append(env)
        if len(self._pending) >= 4096:
            self.flush()

    def record_lines(self, lines, envs=()) -> None:
        """Append pre-encoded record lines; ``envs`` are kept when ``keep`` is on."""
        self._pending.extend(lines)
        self.count += len(lines)
        if self.keep:
            self.records.extend(envs)
        if len(self._pending) >= 4096:
            self.flush()

    def flush(self) -> None:
        # hashing the concatenation equals hashing line by line
        if not self._pending:
            return
        chunk = "\n".join(self._pending) + "\n"
        self._pending.clear()
        self._hash.update(chunk.encode())
        if self.sink is not None:
            self.sink.write(chunk)
            self.sink.flush()

    @property
    def digest(self) -> str:
        self.flush()
        return self._hash.hexdigest()


def read_trace(path) -> tuple:
    """Return ``(header, digest, count)`` recomputed from a trace file."""
    h = hashlib.sha256()
    header, count, last = None, 0, 0
    with open(path) as fh:
        for n, line in enumerate(fh):
            line = line.rstrip("\n")
            if n == 0 and line.startswith('{"header"'):
                header = json.loads(line)["header"]
                continue
            seq = json.loads(line)["seq"]
            if seq <= last:
                raise ValueError(f"sequence numbers not increasing at record {seq}")
            last = seq
            h.update(line.encode())
            h.update(b"\n")
            count += 1
    return header, h.hexdigest(), count


class MessageBus:
    """Synchronous run-to-completion delivery between registered agents."""

    def __init__(self, trace: Trace | None = None, metrics: RunMetrics | None = None):
        self.agents = {}
        self.trace = trace if trace is not None else Trace()
        self.metrics = metrics if metrics is not None else RunMetrics()
        self.seq = 0

    def register(self, agent) -> None:
        self.agents[agent.id] = agent

    def dispatch(self, kind: str, sender: int, recipient: int, payload) -> Envelope:
        if sender == recipient:
            raise InvalidEnvelope(f"agent {sender} cannot send to itself")
        target = self.agents.get(recipient)
        if target is None:
            raise UnknownRecipient(f"no agent {recipient} registered")
        self.seq += 1
        env = Envelope(self.seq, kind, sender, recipient, payload)
        self.trace.record(env)
        self.metrics.messages_by_kind[kind] += 1
        try:
            target.handle(kind, sender, payload)
        except AgentError:
            raise
        except DBayError as exc:
            raise AgentError(recipient, _origin(exc), exc) from exc
        return env


    def record_exchanges(self, parent: int, child: int, parent_sample: Mapping, values, replies) -> None:
        """Log sample/reply pairs that were computed without going through ``dispatch``.

        The records are exactly those ``dispatch`` would have written for the
        parent sending ``parent_sample`` plus its own value and the child
        answering with its best utility, one pair per value.
        """
        if child not in self.agents:
            raise UnknownRecipient(f"no agent {child} registered")
        items = sorted(parent_sample.items())
        before = "".join(['"%d":%s,' % (a, _num(v)) for a, v in items if a < parent])
        after = "".join([',"%d":%s' % (a, _num(v)) for a, v in items if a > parent])
        head = '{"seq":%d,"kind":"' + SAMPLE + f'","from":{parent},"to":{child},"payload":{{"samples":{{'
        tail = "}}}"
        reply_head = '{"seq":%d,"kind":"' + UTILITY + f'","from":{child},"to":{parent},"payload":{{"utility":'
        seq = self.seq
        lines = []
        for v, r in zip(values, replies):
            lines.append(head % (seq + 1) + before + f'"{parent}":' + _num(v) + after + tail)
            lines.append(reply_head % (seq + 2) + _num(r) + "}}")
            seq += 2
        envs = ()
        if self.trace.keep:
            envs = []
            for i, (v, r) in enumerate(zip(values, replies)):
                own = dict(parent_sample)
                own[parent] = v
                envs.append(Envelope(self.seq + 2 * i + 1, SAMPLE, parent, child, own))
                envs.append(Envelope(self.seq + 2 * i + 2, UTILITY, child, parent, r))
        self.seq = seq
        self.trace.record_lines(lines, envs)
        self.metrics.messages_by_kind[SAMPLE] += len(values)
        self.metrics.messages_by_kind[UTILITY] += len(values)


def _origin(exc: BaseException) -> str:
    """Short name of the module whose frame raised ``exc``."""
    tb, name = exc.__traceback__, "runtime"
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", name)
        tb = tb.tb_next
    return name.rsplit(".", 1)[-1]


@dataclass
class RunResult:
    assignment: dict
    utility: float
    root_utility: float
    metrics: RunMetrics
    trace: Trace


def agent_lipschitz(instance: DcopInstance, agent: int) -> float:
    """Slope bound of ``agent``'s objective in normalised input units."""
    var = instance.variable_of(agent)
    return instance.agent_lipschitz(agent) * instance.domains[var].width


def _as_forest(instance, tree):
    if tree is None:
        return build_pseudo_forest(instance)
    trees = [tree] if isinstance(tree, PseudoTree) else list(tree)
    out = []
    for t in trees:
        if not t.local_functions and not t.shared_functions:
            t = t.with_functions(allocate_functions(instance, t))
        out.append(t)
    covered = sorted(a for t in out for a in t.order)
    if covered != list(instance.agents):
        raise ValueError("pseudo-trees must cover every agent exactly once")
    return out


def _per_agent(value, agent, default=None):
    if isinstance(value, Mapping):
        return value.get(agent, default)
    return default if value is None else value


def run_to_completion(
    instance: DcopInstance,
    tree=None,
    budgets=10,
    seed: int = 0,
    *,
    sampler="ei",
    xi: float = 0.0,
    lipschitz=None,
    check_lipschitz: bool = True,
    compact: bool = True,
    fast_leaves: bool = True,
    trace: Trace | None = None,
) -> RunResult:
    """Run the protocol on every pseudo-tree of ``instance``.

    ``budgets``, ``lipschitz`` and ``sampler`` are a single value or a per-agent
    mapping. ``lipschitz`` overrides are in normalised units. The run is
    deterministic, so ``seed`` only labels the run.
    """
    del seed  # recorded by callers; nothing here is random
    start = time.perf_counter()
    forest = _as_forest(instance, tree)
    metrics = RunMetrics()
    bus = MessageBus(trace if trace is not None else Trace(), metrics)
    params = AcquisitionParams(xi)
    agents = {}
    for t in forest:
        for a in t.order:
            lip = _per_agent(lipschitz, a)
            agents[a] = DBayAgent(
                a,
                instance,
                t,
                bus,
                budget=_per_agent(budgets, a),
                lipschitz=agent_lipschitz(instance, a) if lip is None else lip,
                params=params,
                sampler=_per_agent(sampler, a, "ei") if isinstance(sampler, Mapping) else sampler,
                check_lipschitz=check_lipschitz,
                compact=compact,
                fast_leaves=fast_leaves,
            )
            bus.register(agents[a])
    root_utils = []
    for t in forest:
        root = agents[t.root]
        try:
            root_utils.append(root.run_root())
        except AgentError:
            raise
        except DBayError as exc:
            raise AgentError(t.root, _origin(exc), exc) from exc
    assignment = {instance.variable_of(a): ag.best for a, ag in agents.items()}
    assignment = dict(sorted(assignment.items()))
    metrics.samples_per_agent = {a: agents[a].samples_taken for a in sorted(agents)}
    metrics.utility_evaluations = sum(ag.evaluations for ag in agents.values())
    metrics.wall_time = time.perf_counter() - start
    return RunResult(
        assignment=assignment,
        utility=evaluate_objective(instance, assignment),
        root_utility=instance.operator.combine(root_utils),
        metrics=metrics,
        trace=bus.trace,
    )


class DBaySolver(BaseEstimator):
    """Estimator-style front end: ``fit(instance)`` runs the protocol.

    Fitted attributes: ``assignment_`` (variable -> value), ``utility_``,
    ``metrics_`` and ``trace_``.
    """

    def __init__(self, budget=10, xi=0.0, sampler="ei", lipschitz=None, check_lipschitz=True, compact=True):
        self.budget = budget
        self.xi = xi
        self.sampler = sampler
        self.lipschitz = lipschitz
        self.check_lipschitz = check_lipschitz
        self.compact = compact

    def fit(self, instance: DcopInstance, tree=None, trace: Trace | None = None):
        if not isinstance(instance, DcopInstance):
            raise TypeError("DBaySolver.fit expects a DcopInstance")
        res = run_to_completion(
            instance,
            tree,
            self.budget,
            sampler=self.sampler,
            xi=self.xi,
            lipschitz=self.lipschitz,
            check_lipschitz=self.check_lipschitz,
            compact=self.compact,
            trace=trace,
        )
        self.assignment_ = res.assignment
        self.utility_ = res.utility
        self.root_utility_ = res.root_utility
        self.metrics_ = res.metrics
        self.trace_ = res.trace
        return self

    def score(self, instance: DcopInstance) -> float:
        return evaluate_objective(instance, self.assignment_)
