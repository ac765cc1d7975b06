"""The D-Bay agent: nested sample/utility optimisation along a pseudo-tree.

Each agent runs a budgeted one-dimensional Bayesian optimisation of its own
variable for every sample message received from its parent. To score one of
its own samples it evaluates the functions it owns and asks its children for
their best responses, which recursively run their own budgeted loops. After
the root's budget is spent, final messages carry the chosen values down the
tree and each agent looks up the incumbent of the loop its parent fixed.

Agents talk only through a bus object exposing
``dispatch(kind, sender, recipient, payload)``; see :mod:`dbay.runtime`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Mapping

from .acquisition import (
    BOOTSTRAP,
    AcquisitionParams,
    LipschitzModel,
    critical_point,
    select_next_sample,
)
from .dcop import DcopInstance, Operator, PseudoTree
from ._fastleaf import DUPLICATE, FLAT, OK, VIOLATED, SensorLeaf, SensorPair, leaf_loop
from .exceptions import (
    BudgetExhausted,
    ConvergedFlat,
    DuplicateInput,
    LipschitzViolated,
    MissingAncestorSample,
    UnknownParentSample,
)
from .gp import DirichletKernel, Observation, ObservationSet

__all__ = [
    "SAMPLE",
    "UTILITY",
    "FINAL",
    "SampleMessage",
    "UtilityMessage",
    "FinalMessage",
    "EISampler",
    "GridSampler",
    "make_sampler",
    "DBayAgent",
    "KEY_DECIMALS",
]

SAMPLE, UTILITY, FINAL = "sample", "utility", "final"
KEY_DECIMALS = 12


@dataclass(frozen=True)
class SampleMessage:
    samples: Mapping[int, float]


@dataclass(frozen=True)
class UtilityMessage:
    utility: float


@dataclass(frozen=True)
class FinalMessage:
    assignments: Mapping[int, float]


class EISampler:
    """Endpoints and midpoint first, then the expected-improvement maximiser."""

    name = "ei"

    def __init__(self, budget: int, kernel: DirichletKernel | None, params: AcquisitionParams):
        self.budget = 1 if kernel is None else int(budget)
        self.kernel = kernel
        self.params = params

    def next(self, obs: ObservationSet) -> float:
        if len(obs) < len(BOOTSTRAP):
            for x in BOOTSTRAP:
                if x not in obs:
                    return x
        return select_next_sample(obs, self.kernel, self.params)


class GridSampler:
    """Equidistant inputs ``i / (k - 1)`` in ascending order; the budget is ``k``."""

    name = "grid"

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("grid sampler needs k >= 1")
        self.budget = int(k)
        self.points = [0.5] if k == 1 else [i / (k - 1) for i in range(k)]

    def next(self, obs: ObservationSet) -> float:
        return self.points[len(obs)]


def make_sampler(spec, budget: int, kernel, params: AcquisitionParams):
    """``"ei"``, ``("grid", k)`` or ``"grid"`` (k equal to the budget)."""
    if spec in (None, "ei"):
        return EISampler(budget, kernel, params)
    if spec == "grid":
        return GridSampler(budget)
    if isinstance(spec, (tuple, list)) and spec and spec[0] == "grid":
        return GridSampler(int(spec[1]))
    raise ValueError(f"unknown sampler {spec!r}")


class DBayAgent:
    """State machine of one agent.

    ``lipschitz`` is the slope bound of the agent's objective in normalised
    input units; it sets the kernel scale. Observation sets are keyed by the
    ancestor values of the received sample message, rounded to
    ``KEY_DECIMALS`` digits. With ``compact`` a finished set is reduced to its
    incumbent, which is all the final phase needs.
    """

    def __init__(
        self,
        agent: int,
        instance: DcopInstance,
        tree: PseudoTree,
        bus,
        budget: int,
        lipschitz: float,
        params: AcquisitionParams = AcquisitionParams(),
        sampler="ei",
        check_lipschitz: bool = True,
        compact: bool = True,
        fast_leaves: bool = True,
    ):
        self.id = agent
        self.bus = bus
        self.operator = instance.operator
        self.variable = instance.variable_of(agent)
        self.domain = instance.domains[self.variable]
        self.parent = tree.parent[agent]
        self.children = tuple(tree.children[agent])
        self.ancestors = tuple(sorted(tree.ancestors(agent)))
        self.is_root = self.parent is None
        self.is_leaf = not self.children
        self.functions = tuple(tree.functions_of(agent))
        self._scopes = tuple((f, tuple(instance.scope_agents(f))) for f in self.functions)
        self.lipschitz = LipschitzModel(float(lipschitz))
        self.kernel = DirichletKernel(self.lipschitz.constant) if self.lipschitz.constant > 0 else None
        self.sampler = make_sampler(sampler, budget, self.kernel, params)
        self.budget = self.sampler.budget
        # child best responses only approximate a Lipschitz function, so only leaves are checked
        self.check_lipschitz = check_lipschitz and self.is_leaf and self.kernel is not None
        self.compact = compact
        self.store = {}
        self.mailbox = {c: deque() for c in self.children}
        self.best = None
        self.samples_taken = 0
        self.evaluations = 0
        self._fast = None
        self._pair = None
        self._pair_ready = not (
            fast_leaves
            and len(self.children) == 1
            and self.kernel is not None
            and isinstance(self.sampler, EISampler)
            and self.operator is Operator.SUM
        )
        if (
            fast_leaves
            and self.is_leaf
            and self.kernel is not None
            and isinstance(self.sampler, EISampler)
            and self.operator is Operator.SUM
            and SensorLeaf.supports(agent, self._scopes)
        ):
            self._fast = SensorLeaf(agent, self._scopes)

    # keys -------------------------------------------------------------
    def key_of(self, samples: Mapping[int, float]) -> tuple:
        try:
            return tuple([round(samples[a], KEY_DECIMALS) for a in self.ancestors])
        except KeyError as exc:
            raise MissingAncestorSample(f"message lacks ancestor {exc.args[0]}") from None

    def value_of(self, x: float) -> float:
        return self.domain.denormalize(x)

    # sampling phase ---------------------------------------------------
    def optimize_local_variables(self, parent_sample: Mapping[int, float]) -> UtilityMessage:
        """One optimisation step for the loop belonging to ``parent_sample``."""
        key = self.key_of(parent_sample)
        obs = self.store.get(key)
        if obs is None:
            obs = self.store[key] = ObservationSet()
        elif not isinstance(obs, ObservationSet) or len(obs) >= self.budget:
            raise BudgetExhausted(f"budget {self.budget} spent for this parent sample")
        x = self.sampler.next(obs)
        own = dict(parent_sample)
        own[self.id] = self.value_of(x)
        u = self.calculate_utility(own)
        i = obs.insert(x, u)
        self.samples_taken += 1
        if self.check_lipschitz:
            if i > 0:
                critical_point(obs[i - 1], obs[i], self.lipschitz)
            if i + 1 < len(obs):
                critical_point(obs[i], obs[i + 1], self.lipschitz)
        return UtilityMessage(u)

    def calculate_utility(self, own_sample: Mapping[int, float]) -> float:
        self.evaluations += 1
        op = self.operator
        try:
            local = op.combine(f(*[own_sample[a] for a in scope]) for f, scope in self._scopes)
        except KeyError as exc:
            raise MissingAncestorSample(f"shared function needs agent {exc.args[0]}") from None
        if not self.children:
            return local
        return op.join(local, self.get_child_utility(own_sample))

    def get_child_utility(self, own_sample: Mapping[int, float]) -> float:
        for c in self.children:
            self.bus.dispatch(SAMPLE, self.id, c, own_sample)
        return self.operator.combine(self.mailbox[c].popleft() for c in self.children)

    def run_loop(self, parent_sample: Mapping[int, float]) -> Observation:
        """Spend the budget for ``parent_sample`` and return the incumbent."""
        key = self.key_of(parent_sample)
        if self._fast is not None and key not in self.store:
            self._compiled_loop(key, parent_sample)
        elif key in self.store or not self._paired_loop(key, parent_sample):
            while True:
                try:
                    self.optimize_local_variables(parent_sample)
                except (BudgetExhausted, ConvergedFlat):
                    break
        entry = self.store[key]
        best = entry.incumbent if isinstance(entry, ObservationSet) else entry
        if self.compact and not self.is_root:
            self.store[key] = best
        return best

    def _compiled_loop(self, key, parent_sample) -> None:
        try:
            base = self._fast.bases(parent_sample)
        except KeyError as exc:
            raise MissingAncestorSample(f"shared function needs agent {exc.args[0]}") from None
        fast = self._fast
        xs, ys, n, best, status, where = leaf_loop(
            base, fast.bearing, fast.active, fast.beta, fast.wrap,
            self.domain.lower, self.domain.upper, self.kernel.scale,
            self.budget, self.sampler.params.xi, self.check_lipschitz,
        )
        self.samples_taken += n
        self.evaluations += n
        if status == VIOLATED:
            # reuse the generic message
            critical_point((xs[where], ys[where]), (xs[where + 1], ys[where + 1]), self.lipschitz)
            raise LipschitzViolated(f"slope between samples {where} and {where + 1} exceeds the Lipschitz constant")
        if status == DUPLICATE:
            raise DuplicateInput(f"input {xs[where]!r} already observed")
        if self.compact:
            self.store[key] = Observation(float(xs[best]), float(ys[best]))
        else:
            self.store[key] = ObservationSet(zip(xs[:n].tolist(), ys[:n].tolist()))

    def _paired_loop(self, key, parent_sample) -> bool:
        """Run this loop and the child's loops in one compiled call.

        Returns False, with nothing changed, when the pair is unsupported or
        the compiled run hit a case the generic path has to reproduce
        (an error, a duplicate sample or a child key collision).
        """
        if not self._pair_ready:
            # children register after their parent, so resolve on first use
            self._pair_ready = True
            child = self.bus.agents.get(self.children[0]) if hasattr(self.bus, "record_exchanges") else None
            if child is not None and SensorPair.supports(self, child):
                self._pair = SensorPair(self, child)
        pair = self._pair
        if pair is None:
            return False
        try:
            values, xs, ys, cx, cy, cn, n, status = pair.run(parent_sample)
        except KeyError:
            return False
        if status != OK and status != FLAT:
            return False
        child = pair.child
        values = values[:n].tolist()
        slot = pair.slot
        keys = [key[:slot] + (round(v, KEY_DECIMALS),) + key[slot:] for v in values]
        if len(set(keys)) != n or any(k in child.store for k in keys):
            return False
        replies = cy[:n].tolist()
        self.bus.record_exchanges(self.id, child.id, parent_sample, values, replies)
        for k, x, y in zip(keys, cx[:n].tolist(), replies):
            child.store[k] = Observation(x, y)
        taken = int(cn[:n].sum())
        child.samples_taken += taken
        child.evaluations += taken
        self.samples_taken += n
        self.evaluations += n
        self.store[key] = ObservationSet(zip(xs[:n].tolist(), ys[:n].tolist()))
        return True

    def run_root(self) -> float:
        """Root loop followed by the final phase; returns the root's best utility."""
        best = self.run_loop({})
        self.process_final({})
        return best.y

    # message handlers -------------------------------------------------
    def handle(self, kind: str, sender: int, payload) -> None:
        if kind == SAMPLE:
            best = self.run_loop(payload)
            self.bus.dispatch(UTILITY, self.id, self.parent, best.y)
        elif kind == UTILITY:
            self.mailbox[sender].append(payload)
        elif kind == FINAL:
            self.process_final(payload)
        else:
            raise ValueError(f"unknown message kind {kind!r}")

    def incumbent_for(self, assignments: Mapping[int, float]) -> Observation:
        key = self.key_of(assignments)
        entry = self.store.get(key)
        if entry is None:
            raise UnknownParentSample(f"no observations recorded for ancestor values {key}")
        return entry.incumbent if isinstance(entry, ObservationSet) else entry

    def process_final(self, parent_final: Mapping[int, float]) -> dict:
        best = self.incumbent_for(parent_final)
        self.best = self.value_of(best.x)
        out = dict(parent_final)
        out[self.id] = self.best
        for c in self.children:
            self.bus.dispatch(FINAL, self.id, c, out)
        return out
