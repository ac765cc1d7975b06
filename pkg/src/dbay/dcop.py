"""Continuous DCOP model: domains, utility functions, constraint graph and pseudo-tree."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .exceptions import (
    DisconnectedGraph,
    IncompleteAssignment,
    InvalidInstance,
    OutOfDomain,
    ScopeNotOnBranch,
)

__all__ = [
    "ContinuousDomain",
    "UtilityFunction",
    "Operator",
    "DcopInstance",
    "ConstraintGraph",
    "PseudoTree",
    "build_constraint_graph",
    "build_pseudo_tree",
    "build_pseudo_forest",
    "allocate_functions",
    "evaluate_objective",
    "check_assignment",
]


@dataclass(frozen=True)
class ContinuousDomain:
    """Closed interval ``[lower, upper]``."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise InvalidInstance(f"domain bounds must be finite, got [{self.lower}, {self.upper}]")
        if not self.lower < self.upper:
            raise InvalidInstance(f"empty domain [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def __contains__(self, value) -> bool:
        return self.lower <= value <= self.upper

    def normalize(self, value: float) -> float:
        return (value - self.lower) / self.width

    def denormalize(self, unit: float) -> float:
        # exact endpoints so bootstrap samples hit the boundary bit-for-bit
        if unit == 0.0:
            return self.lower
        if unit == 1.0:
            return self.upper
        return self.lower + unit * self.width

    def grid(self, k: int) -> np.ndarray:
        """``k`` equidistant values including both endpoints (k=1 gives the midpoint)."""
        if k < 1:
            raise ValueError("grid needs at least one sample")
        if k == 1:
            return np.array([self.denormalize(0.5)])
        values = self.lower + self.width * (np.arange(k) / (k - 1))
        values[-1] = self.upper
        return values


class Operator(enum.Enum):
    SUM = "sum"
    MAX = "max"

    @property
    def identity(self) -> float:
        return 0.0 if self is Operator.SUM else -math.inf

    def combine(self, values: Iterable[float]) -> float:
        acc = self.identity
        if self is Operator.SUM:
            for v in values:
                acc += v
        else:
            for v in values:
                if v > acc:
                    acc = v
        return acc

    def join(self, a, b):
        """Pairwise aggregate; works elementwise on arrays."""
        if self is Operator.SUM:
            return a + b
        return np.maximum(a, b) if isinstance(a, np.ndarray) or isinstance(b, np.ndarray) else max(a, b)

    @classmethod
    def parse(cls, value) -> "Operator":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True, eq=False)
class UtilityFunction:
    """A utility function over an ordered scope of variables.

    ``evaluator`` is called with one float per scope variable, in scope order.
    If it exposes a ``grid`` method, that is used for vectorised evaluation on
    broadcastable arrays; otherwise the scalar path is vectorised with numpy.
    ``lipschitz[j]`` bounds the slope with respect to ``scope[j]`` in utility
    units per domain unit.
    """

    id: int
    scope: tuple
    evaluator: Callable
    lipschitz: tuple

    def __post_init__(self):
        scope = tuple(int(v) for v in self.scope)
        if not scope:
            raise InvalidInstance(f"function {self.id} has an empty scope")
        if len(set(scope)) != len(scope):
            raise InvalidInstance(f"function {self.id} has duplicate scope entries {scope}")
        lip = tuple(float(v) for v in self.lipschitz)
        if len(lip) != len(scope):
            raise InvalidInstance(f"function {self.id}: need one Lipschitz constant per scope variable")
        if any(v < 0 or not math.isfinite(v) for v in lip):
            raise InvalidInstance(f"function {self.id}: Lipschitz constants must be finite and >= 0")
        object.__setattr__(self, "scope", scope)
        object.__setattr__(self, "lipschitz", lip)

    def __call__(self, *values: float) -> float:
        return self.evaluator(*values)

    def lipschitz_for(self, variable: int) -> float:
        try:
            return self.lipschitz[self.scope.index(variable)]
        except ValueError:
            return 0.0

    def evaluate_grid(self, *arrays: np.ndarray) -> np.ndarray:
        """Evaluate on broadcastable arrays, one per scope variable."""
        grid = getattr(self.evaluator, "grid", None)
        if grid is not None:
            return np.asarray(grid(*arrays), dtype=float)
        return np.vectorize(self.evaluator, otypes=[float])(*arrays)


@dataclass(frozen=True, eq=False)
class DcopInstance:
    """The tuple ``<A, X, D, F, alpha, op>`` with one variable per agent."""

    agents: tuple
    domains: tuple
    functions: tuple
    allocation: tuple = None
    operator: Operator = Operator.SUM

    def __post_init__(self):
        agents = tuple(int(a) for a in self.agents)
        domains = tuple(
            d if isinstance(d, ContinuousDomain) else ContinuousDomain(*d) for d in self.domains
        )
        if len(domains) != len(agents):
            raise InvalidInstance(
                f"one variable per agent required: {len(agents)} agents, {len(domains)} variables"
            )
        if list(agents) != list(range(len(agents))):
            raise InvalidInstance("agents must be numbered 0..M-1")
        allocation = tuple(range(len(agents))) if self.allocation is None else tuple(self.allocation)
        if sorted(allocation) != list(agents) or len(allocation) != len(domains):
            raise InvalidInstance("allocation must map variables one-to-one onto agents")
        for f in self.functions:
            if any(v < 0 or v >= len(domains) for v in f.scope):
                raise InvalidInstance(f"function {f.id} references unknown variable in {f.scope}")
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "domains", domains)
        object.__setattr__(self, "functions", tuple(self.functions))
        object.__setattr__(self, "allocation", allocation)
        object.__setattr__(self, "operator", Operator.parse(self.operator))

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_variables(self) -> int:
        return len(self.domains)

    def variable_of(self, agent: int) -> int:
        return self.allocation.index(agent)

    def agent_of(self, variable: int) -> int:
        return self.allocation[variable]

    def scope_agents(self, function: UtilityFunction) -> tuple:
        return tuple(self.allocation[v] for v in function.scope)

    def agent_lipschitz(self, agent: int) -> float:
        """Sum over functions involving ``agent`` of their slope bound w.r.t. its variable."""
        var = self.variable_of(agent)
        return math.fsum(f.lipschitz_for(var) for f in self.functions if var in f.scope)


def check_assignment(instance: DcopInstance, assignment: Mapping[int, float], complete=True) -> None:
    for var, value in assignment.items():
        if var < 0 or var >= instance.n_variables:
            raise IncompleteAssignment(f"unknown variable {var}")
        if value not in instance.domains[var]:
            raise OutOfDomain(f"x{var}={value} outside {instance.domains[var]}")
    if complete:
        missing = [v for v in range(instance.n_variables) if v not in assignment]
        if missing:
            raise IncompleteAssignment(f"assignment misses variables {missing}")


def evaluate_objective(instance: DcopInstance, assignment: Mapping[int, float]) -> float:
    """Aggregate every utility function on ``assignment`` with the instance operator."""
    needed = {v for f in instance.functions for v in f.scope}
    missing = sorted(v for v in needed if v not in assignment)
    if missing:
        raise IncompleteAssignment(f"assignment misses variables {missing}")
    return instance.operator.combine(f(*(assignment[v] for v in f.scope)) for f in instance.functions)


@dataclass(frozen=True)
class ConstraintGraph:
    agents: tuple
    edges: tuple

    def __post_init__(self):
        adj = {a: [] for a in self.agents}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        object.__setattr__(self, "_adjacency", {a: tuple(sorted(n)) for a, n in adj.items()})

    def neighbors(self, agent: int) -> tuple:
        return self._adjacency[agent]

    def components(self) -> list:
        """Connected components as sorted tuples, ordered by their smallest agent."""
        seen, out = set(), []
        for start in self.agents:
            if start in seen:
                continue
            stack, comp = [start], []
            seen.add(start)
            while stack:
                u = stack.pop()
                comp.append(u)
                for v in self._adjacency[u]:
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
            out.append(tuple(sorted(comp)))
        return out

    def subgraph(self, agents: Iterable[int]) -> "ConstraintGraph":
        keep = set(agents)
        return ConstraintGraph(
            tuple(a for a in self.agents if a in keep),
            tuple(e for e in self.edges if e[0] in keep and e[1] in keep),
        )


def build_constraint_graph(instance: DcopInstance) -> ConstraintGraph:
    edges = set()
    for f in instance.functions:
        scope_agents = sorted(set(instance.scope_agents(f)))
        for a, b in itertools.combinations(scope_agents, 2):
            edges.add((a, b))
    return ConstraintGraph(instance.agents, tuple(sorted(edges)))


@dataclass(frozen=True)
class PseudoTree:
    """DFS pseudo-tree of one connected component.

    ``children`` and ``pseudo_*`` tuples are in ascending agent order; ``order``
    is the DFS preorder. Function allocation is empty until
    :func:`allocate_functions` results are attached with :meth:`with_functions`.
    """

    root: int
    order: tuple
    parent: Mapping[int, int | None]
    pseudo_parents: Mapping[int, tuple]
    children: Mapping[int, tuple]
    pseudo_children: Mapping[int, tuple]
    depth: Mapping[int, int]
    local_functions: Mapping[int, tuple] = field(default_factory=dict)
    shared_functions: Mapping[int, tuple] = field(default_factory=dict)

    @property
    def agents(self) -> tuple:
        return tuple(sorted(self.order))

    @property
    def height(self) -> int:
        return 1 + max(self.depth.values())

    def ancestors(self, agent: int) -> tuple:
        """Ancestors from the parent up to the root."""
        out = []
        p = self.parent[agent]
        while p is not None:
            out.append(p)
            p = self.parent[p]
        return tuple(out)

    def descendants(self, agent: int) -> tuple:
        out, stack = [], list(self.children[agent])
        while stack:
            u = stack.pop()
            out.append(u)
            stack.extend(self.children[u])
        return tuple(sorted(out))

    def is_ancestor(self, a: int, b: int) -> bool:
        return a in self.ancestors(b)

    def functions_of(self, agent: int) -> tuple:
        return tuple(self.local_functions.get(agent, ())) + tuple(self.shared_functions.get(agent, ()))

    def with_functions(self, allocation: Mapping[int, tuple]) -> "PseudoTree":
        return replace(
            self,
            local_functions={a: tuple(allocation[a][0]) for a in self.order},
            shared_functions={a: tuple(allocation[a][1]) for a in self.order},
        )

    def separator(self, agent: int, instance: DcopInstance) -> tuple:
        """Ancestors that functions in the subtree of ``agent`` depend on."""
        sub = {agent, *self.descendants(agent)}
        anc = set(self.ancestors(agent))
        sep = set()
        for f in instance.functions:
            agents = set(instance.scope_agents(f))
            if agents & sub:
                sep |= agents & anc
        return tuple(sorted(sep))


def build_pseudo_tree(graph: ConstraintGraph, root: int | None = None) -> PseudoTree:
    """Depth-first pseudo-tree visiting neighbours in ascending index order.

    Raises :class:`DisconnectedGraph` if the graph has more than one component.
    """
    if not graph.agents:
        raise InvalidInstance("empty constraint graph")
    components = graph.components()
    if len(components) > 1:
        raise DisconnectedGraph(components)
    root = min(graph.agents) if root is None else root
    if root not in graph.agents:
        raise InvalidInstance(f"root {root} is not an agent of the graph")

    parent = {root: None}
    depth = {root: 0}
    order = [root]
    children = {a: [] for a in graph.agents}
    pparents = {a: [] for a in graph.agents}
    pchildren = {a: [] for a in graph.agents}
    on_stack = {root}
    # iterative DFS; each frame holds (agent, iterator over ascending neighbours)
    stack = [(root, iter(graph.neighbors(root)))]
    while stack:
        u, it = stack[-1]
        advanced = False
        for v in it:
            if v not in parent:
                parent[v] = u
                depth[v] = depth[u] + 1
                children[u].append(v)
                order.append(v)
                on_stack.add(v)
                stack.append((v, iter(graph.neighbors(v))))
                advanced = True
                break
            if v != parent[u] and v in on_stack and v not in pparents[u]:
                pparents[u].append(v)
                pchildren[v].append(u)
        if not advanced:
            stack.pop()
            on_stack.discard(u)

    return PseudoTree(
        root=root,
        order=tuple(order),
        parent=parent,
        pseudo_parents={a: tuple(sorted(v)) for a, v in pparents.items()},
        children={a: tuple(sorted(v)) for a, v in children.items()},
        pseudo_children={a: tuple(sorted(v)) for a, v in pchildren.items()},
        depth=depth,
    )


def allocate_functions(instance: DcopInstance, tree: PseudoTree) -> dict:
    """Assign every function touching ``tree`` to its deepest scope agent.

    Returns ``{agent: (local, shared)}`` tuples of functions. Functions whose
    scope lies entirely outside the tree are ignored (they belong to another
    component); a scope straddling two branches raises
    :class:`ScopeNotOnBranch`.
    """
    members = set(tree.order)
    out = {a: ([], []) for a in tree.order}
    for f in instance.functions:
        agents = sorted(set(instance.scope_agents(f)))
        inside = [a for a in agents if a in members]
        if not inside:
            continue
        if len(inside) != len(agents):
            raise ScopeNotOnBranch(f"function {f.id} spans several pseudo-trees: {agents}")
        deepest = max(agents, key=lambda a: (tree.depth[a], a))
        anc = set(tree.ancestors(deepest))
        if any(a != deepest and a not in anc for a in agents):
            raise ScopeNotOnBranch(f"function {f.id} scope {agents} is not on a single branch")
        out[deepest][0 if len(agents) == 1 else 1].append(f)
    return {a: (tuple(loc), tuple(sh)) for a, (loc, sh) in out.items()}


def build_pseudo_forest(instance: DcopInstance, roots: Mapping[int, int] | None = None) -> list:
    """One allocated pseudo-tree per connected component.

    Components are rooted at their lowest agent unless ``roots`` maps the
    component's lowest agent to another root.
    """
    graph = build_constraint_graph(instance)
    forest = []
    for comp in graph.components():
        root = comp[0] if roots is None else roots.get(comp[0], comp[0])
        tree = build_pseudo_tree(graph.subgraph(comp), root)
        forest.append(tree.with_functions(allocate_functions(instance, tree)))
    return forest


def restrict_assignment(assignment: Mapping[int, float], variables: Sequence[int]) -> dict:
    return {v: assignment[v] for v in variables}
