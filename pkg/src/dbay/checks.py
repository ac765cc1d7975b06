"""Oracle cross-checks run by ``dbay verify``.

Each check returns a :class:`CheckResult`; none of them mutate global state
and all draw from their own seeded generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .acquisition import AcquisitionParams, LipschitzModel, upper_bound
from .baselines import dpop_solve, exhaustive_solve, make_grid, tie_break_order
from .benchmark import generate_problem
from .dcop import build_pseudo_forest
from .gp import DirichletKernel, ObservationSet, posterior_dense, posterior_interval_grid, tridiagonal_inverse_elements


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def random_observations(rng, n_min=3, n_max=20, lipschitz=None) -> ObservationSet:
    """Boundary points plus random interior inputs; outputs obey ``lipschitz`` if given."""
    s = int(rng.integers(n_min, n_max + 1))
    xs = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0.0, 1.0, s - 2)]))
    if lipschitz is None:
        ys = rng.normal(size=s)
    else:
        # random walk with slopes inside [-L, L]
        slopes = rng.uniform(-lipschitz, lipschitz, s - 1)
        ys = rng.normal() + np.concatenate([[0.0], np.cumsum(slopes * np.diff(xs))])
    return ObservationSet(zip(xs.tolist(), ys.tolist()))


def random_lipschitz_function(rng, lipschitz, n_knots=None):
    """Piecewise-linear function on [0, 1] with every slope inside ``[-lipschitz, lipschitz]``.

    Returns a vectorised callable; scalars come back as floats.
    """
    n = int(n_knots if n_knots is not None else rng.integers(2, 12))
    knots = np.concatenate([[0.0], np.sort(rng.uniform(0.0, 1.0, n)), [1.0]])
    slopes = rng.uniform(-lipschitz, lipschitz, len(knots) - 1)
    values = rng.normal() + np.concatenate([[0.0], np.cumsum(slopes * np.diff(knots))])

    def f(x):
        out = np.interp(x, knots, values)
        return float(out) if np.ndim(out) == 0 else out

    return f


def check_posterior(n_sets=100, seed=0, tol=1e-8) -> CheckResult:
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, 101)
    worst = 0.0
    worst_inv = 0.0
    for _ in range(n_sets):
        obs = random_observations(rng)
        kernel = DirichletKernel(float(rng.uniform(0.2, 5.0)))
        mean, var = posterior_interval_grid(obs, kernel, grid)
        for x, m, v in zip(grid, mean, var):
            d = posterior_dense(obs, kernel, float(x))
            worst = max(worst, abs(m - d.mean), abs(v - d.variance))
        inner = [x for x in obs.xs if 0.0 < x < 1.0]
        if len(inner) >= 3:
            inv = tridiagonal_inverse_elements(inner, kernel).to_dense()
            worst_inv = max(worst_inv, float(np.max(np.abs(kernel.gram(inner) @ inv - np.eye(len(inner))))))
    ok = worst < tol and worst_inv < tol
    return CheckResult("posterior", ok, f"max interval/dense gap {worst:.2e}, max |K K^-1 - I| {worst_inv:.2e}")


def check_envelope_guard(n_sets=200, seed=1, tol=1e-9) -> CheckResult:
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, 1001)
    worst = math.inf
    for _ in range(n_sets):
        L = float(rng.uniform(0.5, 10.0))
        obs = random_observations(rng, lipschitz=L)
        mean, var = posterior_interval_grid(obs, DirichletKernel(L), grid)
        gap = mean + np.sqrt(var) - upper_bound(obs, LipschitzModel(L), grid)
        worst = min(worst, float(np.min(gap)))
    return CheckResult("envelope-guard", worst >= -tol, f"min (mu + sigma - envelope) {worst:.3e}")


def check_dpop(n_instances=20, seed=2) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_instances):
        m = int(rng.integers(2, 5))
        problem = generate_problem(int(rng.integers(2**31)), m, int(rng.integers(1, 6)))
        inst = problem.instance
        grid = make_grid(inst, int(rng.integers(2, 8)))
        forest = build_pseudo_forest(inst)
        a1, u1 = dpop_solve(inst, forest, grid)
        a2, u2 = exhaustive_solve(inst, grid, order=tie_break_order(inst, forest))
        bad += (u1 != u2) or (a1 != a2)
    return CheckResult("dpop-vs-exhaustive", bad == 0, f"{bad} mismatches over {n_instances} instances")


def run_all() -> list:
    return [check_posterior(), check_envelope_guard(), check_dpop()]
