"""Sensor-coordination benchmark: problem generator, metrics and experiment sweeps.

Sensors sit on a square grid with spacing ``l * sqrt(2)``. That is the
largest spacing for which the range discs of the four sensors around a grid
cell still meet in the cell centre (half the diagonal equals ``l``), so the
covered region has no holes between sensors. Each sensor picks an
orientation in [-180, 180] degrees; a target is observed with quality
``1 - |angle offset| / view_angle`` by the best in-range sensor.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .baselines import dpop_solve, make_grid, min_separator_forest
from .dcop import ContinuousDomain, DcopInstance, Operator, UtilityFunction, evaluate_objective
from .exceptions import ZeroReference
from .functions import SensorTargetUtility, angle_difference
from .runtime import run_to_completion

__all__ = [
    "SensorProblem",
    "ExperimentRecord",
    "ExperimentConfig",
    "sensor_layout",
    "generate_problem",
    "target_utility",
    "lipschitz_bound",
    "relative_utility",
    "sample_efficiency",
    "grid_curve",
    "grid_utility",
    "run_experiment",
    "summarize",
    "write_csv",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("seed", "solver", "budget_or_k", "achieved", "reference", "relative", "samples", "messages")
MATCH_TOL = 1e-9


def sensor_layout(n_sensors: int, spacing: float) -> np.ndarray:
    """Row-major positions on a ``floor(sqrt(M))``-row grid."""
    rows = max(1, int(math.isqrt(n_sensors)))
    cols = math.ceil(n_sensors / rows)
    pos = [(c * spacing, r * spacing) for r in range(rows) for c in range(cols)]
    return np.array(pos[:n_sensors], dtype=float)


def target_utility(omega, sensor, target, view_angle=36.0, sensor_range=1.0, wrap=True) -> float:
    """Observation quality of ``target`` by one sensor oriented at ``omega`` degrees."""
    dx, dy = target[0] - sensor[0], target[1] - sensor[1]
    if math.hypot(dx, dy) > sensor_range:
        return 0.0
    d = abs(angle_difference(omega, math.degrees(math.atan2(dy, dx)), wrap))
    return 0.0 if d > view_angle else 1.0 - d / view_angle


@dataclass(frozen=True, eq=False)
class SensorProblem:
    sensors: np.ndarray
    targets: np.ndarray
    sensor_range: float = 1.0
    view_angle: float = 36.0
    wrap: bool = True
    seed: int | None = None
    instance: DcopInstance = field(default=None, repr=False)

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    def in_range(self, target: int) -> tuple:
        t = self.targets[target]
        d = np.hypot(*(self.sensors - t).T)
        return tuple(int(i) for i in np.flatnonzero(d <= self.sensor_range))

    def compile(self) -> DcopInstance:
        domains = tuple(ContinuousDomain(-180.0, 180.0) for _ in range(self.n_sensors))
        functions = []
        for n in range(len(self.targets)):
            scope = self.in_range(n)
            if not scope:
                continue
            ev = SensorTargetUtility(
                self.targets[n].tolist(),
                [self.sensors[i].tolist() for i in scope],
                self.view_angle,
                self.sensor_range,
                self.wrap,
            )
            functions.append(UtilityFunction(len(functions), scope, ev, ev.slope_bounds()))
        return DcopInstance(tuple(range(self.n_sensors)), domains, tuple(functions), operator=Operator.SUM)

    def utility(self, orientations: Sequence[float]) -> float:
        """Independent per-target evaluation, used to cross-check the compiled instance."""
        total = 0.0
        for t in self.targets:
            total += max(
                target_utility(w, p, t, self.view_angle, self.sensor_range, self.wrap)
                for w, p in zip(orientations, self.sensors)
            )
        return total


def generate_problem(seed, n_sensors=6, n_targets=12, sensor_range=1.0, view_angle=36.0, wrap=True) -> SensorProblem:
    """Grid of sensors with targets drawn uniformly from the union of their range discs."""
    if n_sensors < 1 or n_targets < 1:
        raise ValueError("need at least one sensor and one target")
    sensors = sensor_layout(n_sensors, sensor_range * math.sqrt(2.0))
    rng = np.random.default_rng(seed)
    lo = sensors.min(axis=0) - sensor_range
    hi = sensors.max(axis=0) + sensor_range
    targets = []
    while len(targets) < n_targets:
        p = rng.uniform(lo, hi)
        if np.min(np.hypot(*(sensors - p).T)) <= sensor_range:
            targets.append(p)
    problem = SensorProblem(sensors, np.array(targets), float(sensor_range), float(view_angle), wrap, seed)
    object.__setattr__(problem, "instance", problem.compile())
    return problem


def lipschitz_bound(problem: SensorProblem, agent: int, normalized: bool = True) -> float:
    """Slope bound of sensor ``agent``'s aggregate objective.

    Every in-range target adds at most ``1 / view_angle`` per degree; with
    ``normalized`` the bound is per unit of the [0, 1]-scaled domain.
    """
    d = np.hypot(*(problem.targets - problem.sensors[agent]).T)
    per_degree = int(np.count_nonzero(d <= problem.sensor_range)) / problem.view_angle
    return per_degree * 360.0 if normalized else per_degree


def relative_utility(achieved: float, reference: float) -> float:
    if reference == 0.0:
        raise ZeroReference("reference utility is zero")
    if reference < 0.0:
        raise ValueError(f"reference utility must be positive, got {reference}")
    return achieved / reference


def sample_efficiency(dbay: Mapping[int, float], grid: Mapping[int, float], tol: float = MATCH_TOL) -> dict:
    """Smallest grid size whose relative utility reaches D-Bay's, per budget.

    ``dbay`` maps budget to relative utility and ``grid`` maps k to relative
    utility. Budgets the grid never matches map to the string ``"<k_max>+"``.
    """
    ks = sorted(grid)
    out = {}
    for b, r in sorted(dbay.items()):
        hit = next((k for k in ks if grid[k] >= r - tol), None)
        out[b] = hit if hit is not None else f"{ks[-1]}+"
    return out


@dataclass
class ExperimentRecord:
    seed: int
    solver: str
    budget_or_k: int
    achieved: float
    reference: float
    relative: float
    samples: int
    messages: int


@dataclass
class ExperimentConfig:
    seeds: Sequence[int] = tuple(range(30))
    budgets: Sequence[int] = tuple(range(3, 21))
    n_sensors: int = 6
    n_targets: int = 12
    sensor_range: float = 1.0
    view_angle: float = 36.0
    reference_k: int = 720
    wrap: bool = True
    xi: float = 0.0
    grid_ks: Sequence[int] | None = None

    def __post_init__(self):
        if any(b < 3 for b in self.budgets):
            raise ValueError("budgets must be at least 3 (bootstrap samples)")
        ks = list(self.grid_ks) if self.grid_ks is not None else list(self.budgets)
        if ks and self.reference_k < max(ks):
            raise ValueError("reference k must be at least the largest grid k")


def grid_utility(instance: DcopInstance, k: int) -> float:
    grid = make_grid(instance, k)
    return dpop_solve(instance, min_separator_forest(instance), grid)[1]


def grid_curve(problem: SensorProblem, ks: Sequence[int], reference: float) -> dict:
    return {k: relative_utility(grid_utility(problem.instance, k), reference) for k in ks}


def run_seed(seed: int, config: ExperimentConfig, trace_factory=None) -> tuple:
    """Records for one seed plus the seed's grid curve (when ``grid_ks`` is set)."""
    problem = generate_problem(
        seed, config.n_sensors, config.n_targets, config.sensor_range, config.view_angle, config.wrap
    )
    inst = problem.instance
    reference = grid_utility(inst, config.reference_k)
    records = []
    for b in config.budgets:
        trace = trace_factory(seed, b) if trace_factory else None
        res = run_to_completion(inst, budgets=b, seed=seed, xi=config.xi, trace=trace)
        if trace is not None:
            trace.flush()
        records.append(
            ExperimentRecord(
                seed, "dbay", b, res.utility, reference, relative_utility(res.utility, reference),
                res.metrics.total_samples, res.metrics.total_messages,
            )
        )
        g = grid_utility(inst, b)
        records.append(
            ExperimentRecord(seed, "grid", b, g, reference, relative_utility(g, reference), b * inst.n_agents, 0)
        )
    curve = grid_curve(problem, config.grid_ks, reference) if config.grid_ks else {}
    return records, curve


def run_experiment(config: ExperimentConfig, jobs: int = 1, trace_factory=None) -> tuple:
    """Run every seed; returns ``(records, mean grid curve)``.

    Seeds are independent, so ``jobs > 1`` spreads them over processes; the
    output is ordered by seed regardless.
    """
    seeds = list(config.seeds)
    if jobs > 1 and trace_factory is None:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(run_seed, seeds, [config] * len(seeds)))
    else:
        results = [run_seed(s, config, trace_factory) for s in seeds]
    records = [r for recs, _ in results for r in recs]
    curve = {}
    if config.grid_ks:
        for k in config.grid_ks:
            curve[k] = float(np.mean([c[k] for _, c in results]))
    return records, curve


def summarize(records: Sequence[ExperimentRecord]) -> dict:
    """Mean relative utility per solver and budget: ``{solver: {budget: mean}}``."""
    acc = {}
    for r in records:
        acc.setdefault(r.solver, {}).setdefault(r.budget_or_k, []).append(r.relative)
    return {s: {b: float(np.mean(v)) for b, v in sorted(d.items())} for s, d in acc.items()}


def format_csv(records: Sequence[ExperimentRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        row = asdict(r)
        w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(records: Sequence[ExperimentRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_csv(records))


def check_objective(problem: SensorProblem, orientations: Mapping[int, float]) -> float:
    """Difference between the compiled objective and the per-target re-evaluation."""
    a = evaluate_objective(problem.instance, orientations)
    b = problem.utility([orientations[i] for i in range(problem.n_sensors)])
    return abs(a - b)
