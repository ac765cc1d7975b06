"""Centralised grid baselines: exhaustive enumeration and discrete DPOP.

Both search the same equidistant grid (endpoints included) and break ties
toward the lexicographically smallest grid index in a chosen variable order,
so on any instance where both run they return the same assignment. The
reported utility is always recomputed with :func:`evaluate_objective`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .dcop import DcopInstance, Operator, PseudoTree, build_constraint_graph, build_pseudo_tree, allocate_functions, evaluate_objective
from .exceptions import CapExceeded, GridMismatch, SeparatorTooLarge

__all__ = [
    "Grid",
    "UtilityTable",
    "make_grid",
    "exhaustive_solve",
    "dpop_join",
    "dpop_project",
    "dpop_solve",
    "min_separator_forest",
    "GridSearchSolver",
]

DEFAULT_CAP = 10**8
CHUNK_CELLS = 1 << 22


@dataclass(frozen=True)
class Grid:
    """Per-variable equidistant sample values."""

    values: tuple

    @property
    def ks(self) -> tuple:
        return tuple(len(v) for v in self.values)

    @property
    def size(self) -> int:
        return math.prod(self.ks)

    def assignment(self, index: Sequence[int]) -> dict:
        return {v: float(self.values[v][i]) for v, i in enumerate(index)}


def make_grid(instance: DcopInstance, k) -> Grid:
    """``k`` is one count for every variable or a sequence of counts."""
    ks = [k] * instance.n_variables if np.isscalar(k) else list(k)
    if len(ks) != instance.n_variables:
        raise ValueError("need one grid size per variable")
    return Grid(tuple(d.grid(int(n)) for d, n in zip(instance.domains, ks)))


@dataclass(frozen=True)
class UtilityTable:
    """Dense table over the grid indices of ``scope`` (one axis per variable)."""

    scope: tuple
    values: np.ndarray
    axes: tuple | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        scope = tuple(int(v) for v in self.scope)
        if values.ndim != len(scope):
            raise ValueError(f"table has {values.ndim} axes for scope {scope}")
        if len(set(scope)) != len(scope):
            raise ValueError("duplicate variables in table scope")
        object.__setattr__(self, "scope", scope)
        object.__setattr__(self, "values", values)

    def axis_of(self, var: int):
        return None if self.axes is None else self.axes[self.scope.index(var)]


def _aligned(table: UtilityTable, scope: tuple) -> np.ndarray:
    """View of ``table.values`` broadcastable against ``scope``."""
    order = [v for v in scope if v in table.scope]
    vals = np.transpose(table.values, [table.scope.index(v) for v in order])
    shape = [vals.shape[order.index(v)] if v in table.scope else 1 for v in scope]
    return vals.reshape(shape)


def dpop_join(t1: UtilityTable, t2: UtilityTable, op=Operator.SUM) -> UtilityTable:
    """Combine two tables cellwise over the union of their scopes."""
    op = Operator.parse(op)
    for v in set(t1.scope) & set(t2.scope):
        n1 = t1.values.shape[t1.scope.index(v)]
        n2 = t2.values.shape[t2.scope.index(v)]
        a1, a2 = t1.axis_of(v), t2.axis_of(v)
        if n1 != n2 or (a1 is not None and a2 is not None and not np.array_equal(a1, a2)):
            raise GridMismatch(f"variable {v} uses different grids in the joined tables")
    scope = tuple(sorted(set(t1.scope) | set(t2.scope)))
    axes = None
    if t1.axes is not None or t2.axes is not None:
        axes = tuple(t1.axis_of(v) if v in t1.scope and t1.axes is not None else t2.axis_of(v) for v in scope)
    values = op.join(_aligned(t1, scope), _aligned(t2, scope))
    shape = [t1.values.shape[t1.scope.index(v)] if v in t1.scope else t2.values.shape[t2.scope.index(v)] for v in scope]
    return UtilityTable(scope, np.broadcast_to(values, shape).copy(), axes)


def dpop_project(table: UtilityTable, variables) -> tuple:
    """Maximise out ``variables``.

    Returns the reduced table and ``{var: index array}`` of maximisers over
    the remaining cells; ties go to the lowest index (first in C order of the
    projected axes).
    """
    variables = tuple(variables)
    if not set(variables) <= set(table.scope):
        raise ValueError(f"cannot project {variables} out of scope {table.scope}")
    keep = tuple(v for v in table.scope if v not in variables)
    perm = [table.scope.index(v) for v in keep] + [table.scope.index(v) for v in variables]
    vals = np.transpose(table.values, perm)
    rem_shape = vals.shape[: len(keep)]
    proj_shape = vals.shape[len(keep) :]
    flat = vals.reshape(rem_shape + (-1,))
    idx = np.argmax(flat, axis=-1)
    best = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    unravelled = np.unravel_index(idx, proj_shape) if proj_shape else ()
    argmax = {v: np.asarray(u) for v, u in zip(variables, unravelled)}
    axes = None if table.axes is None else tuple(table.axis_of(v) for v in keep)
    return UtilityTable(keep, best, axes), argmax


def _function_table(f, instance: DcopInstance, grid: Grid) -> UtilityTable:
    scope = f.scope
    arrays = np.meshgrid(*[grid.values[v] for v in scope], indexing="ij", sparse=True)
    vals = np.broadcast_to(f.evaluate_grid(*arrays), tuple(len(grid.values[v]) for v in scope))
    order = sorted(range(len(scope)), key=lambda j: scope[j])
    return UtilityTable(tuple(scope[j] for j in order), np.transpose(vals, order))


def exhaustive_solve(
    instance: DcopInstance,
    grid: Grid,
    cap: int = DEFAULT_CAP,
    order: Sequence[int] | None = None,
) -> tuple:
    """Enumerate the whole grid.

    Ties go to the lexicographically smallest grid index with variables taken
    in ``order`` (default ``0..N-1``). Returns ``(assignment, utility)``.
    """
    n = instance.n_variables
    order = list(range(n)) if order is None else list(order)
    if sorted(order) != list(range(n)):
        raise ValueError("order must be a permutation of the variables")
    if grid.size > cap:
        raise CapExceeded(f"grid has {grid.size} points, above the cap {cap}; use dpop_solve")
    op = instance.operator
    ks = [grid.ks[v] for v in order]
    # chunk over leading axes (in tie-break order) so memory stays bounded
    lead = 0
    while lead < n and math.prod(ks[lead:]) > CHUNK_CELLS:
        lead += 1
    best_val, best_idx = -math.inf, None
    for prefix in np.ndindex(*ks[:lead]):
        arrays = {}
        for pos, v in enumerate(order):
            if pos < lead:
                arrays[v] = np.array(grid.values[v][prefix[pos]]).reshape((1,) * (n - lead))
            else:
                shape = [1] * (n - lead)
                shape[pos - lead] = ks[pos]
                arrays[v] = grid.values[v].reshape(shape)
        acc = np.full((1,) * (n - lead), op.identity)
        for f in instance.functions:
            acc = op.join(acc, f.evaluate_grid(*[arrays[v] for v in f.scope]))
        acc = np.broadcast_to(acc, ks[lead:])
        j = int(np.argmax(acc))
        val = acc.flat[j]
        if best_idx is None or val > best_val:
            best_val = val
            best_idx = tuple(prefix) + np.unravel_index(j, ks[lead:])
    index = [0] * n
    for pos, v in enumerate(order):
        index[v] = int(best_idx[pos])
    assignment = grid.assignment(index)
    return assignment, evaluate_objective(instance, assignment)


def min_separator_forest(instance: DcopInstance) -> list:
    """Pseudo-trees whose roots minimise the largest separator (ties: lowest root)."""
    graph = build_constraint_graph(instance)
    forest = []
    for comp in graph.components():
        sub = graph.subgraph(comp)
        best = None
        for r in comp:
            tree = build_pseudo_tree(sub, r)
            width = max(len(tree.separator(a, instance)) for a in tree.order)
            if best is None or width < best[0]:
                best = (width, tree)
        tree = best[1]
        forest.append(tree.with_functions(allocate_functions(instance, tree)))
    return forest


def _dpop_tree(instance, tree: PseudoTree, grid: Grid, max_cells: int, out: dict) -> None:
    op = instance.operator
    messages = {}
    argmaxes = {}
    # bottom-up: post-order over the DFS preorder reversed
    for a in reversed(tree.order):
        var = instance.variable_of(a)
        sep = tuple(sorted(instance.variable_of(s) for s in tree.separator(a, instance)))
        sep_shape = tuple(grid.ks[v] for v in sep)
        if math.prod(sep_shape) > max_cells:
            raise SeparatorTooLarge(
                f"agent {a} separator {sep} needs {math.prod(sep_shape)} cells (limit {max_cells})"
            )
        factors = [_function_table(f, instance, grid) for f in tree.functions_of(a)]
        factors += [messages.pop(c) for c in tree.children[a]]
        scope = sep + (var,)
        k = grid.ks[var]
        step = max(1, CHUNK_CELLS // max(1, math.prod(sep_shape)))
        best = np.full(sep_shape, -math.inf)
        arg = np.zeros(sep_shape, dtype=np.int64)
        for j0 in range(0, k, step):
            j1 = min(k, j0 + step)
            acc = np.full((1,) * len(scope), op.identity)
            for t in factors:
                vals = _aligned(t, scope)
                if var in t.scope:
                    vals = vals[..., j0:j1]
                acc = op.join(acc, vals)
            acc = np.broadcast_to(acc, sep_shape + (j1 - j0,))
            idx = np.argmax(acc, axis=-1)
            val = np.take_along_axis(acc, idx[..., None], axis=-1)[..., 0]
            better = val > best
            best = np.where(better, val, best)
            arg = np.where(better, idx + j0, arg)
        messages[a] = UtilityTable(sep, best)
        argmaxes[a] = (sep, arg)
    # top-down value propagation
    for a in tree.order:
        var = instance.variable_of(a)
        sep, arg = argmaxes[a]
        out[var] = int(arg[tuple(out[v] for v in sep)])


def dpop_solve(
    instance: DcopInstance,
    tree=None,
    grid: Grid | None = None,
    max_cells: int = 5 * 10**7,
) -> tuple:
    """Exact grid optimum by utility propagation on pseudo-trees.

    ``tree`` may be one pseudo-tree, a list (forest) or ``None`` for the
    lowest-index-rooted forest. Returns ``(assignment, utility)``.
    """
    if grid is None:
        raise ValueError("dpop_solve needs a grid")
    if tree is None:
        from .dcop import build_pseudo_forest

        forest = build_pseudo_forest(instance)
    else:
        forest = [tree] if isinstance(tree, PseudoTree) else list(tree)
        forest = [
            t if (t.local_functions or t.shared_functions) else t.with_functions(allocate_functions(instance, t))
            for t in forest
        ]
    index = {}
    for t in forest:
        _dpop_tree(instance, t, grid, max_cells, index)
    assignment = grid.assignment([index[v] for v in range(instance.n_variables)])
    return assignment, evaluate_objective(instance, assignment)


def tie_break_order(instance: DcopInstance, forest) -> list:
    """Variable order in which DPOP's per-agent lowest-index choice is lexicographic."""
    return [instance.variable_of(a) for t in forest for a in t.order]


class GridSearchSolver(BaseEstimator):
    """Equidistant grid baseline with ``k`` samples per domain.

    ``method`` is ``"auto"`` (enumerate when the grid fits under ``cap``,
    DPOP otherwise), ``"exhaustive"`` or ``"dpop"``.
    """

    def __init__(self, k=10, method="auto", cap=DEFAULT_CAP, max_cells=5 * 10**7):
        self.k = k
        self.method = method
        self.cap = cap
        self.max_cells = max_cells

    def fit(self, instance: DcopInstance):
        grid = make_grid(instance, self.k)
        method = self.method
        if method == "auto":
            method = "exhaustive" if grid.size <= self.cap else "dpop"
        if method == "exhaustive":
            assignment, utility = exhaustive_solve(instance, grid, cap=self.cap)
        elif method == "dpop":
            assignment, utility = dpop_solve(instance, min_separator_forest(instance), grid, self.max_cells)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.grid_ = grid
        self.method_ = method
        self.assignment_ = assignment
        self.utility_ = utility
        return self

    def score(self, instance: DcopInstance) -> float:
        return evaluate_objective(instance, self.assignment_)
