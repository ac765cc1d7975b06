"""Expected improvement, Lipschitz envelopes and next-sample selection on [0, 1].

Everything here works in normalised coordinates. With the Dirichlet kernel
scale set to the Lipschitz constant and no exploration offset, every point
whose Lipschitz upper envelope beats the incumbent has positive expected
improvement, so maximising EI never discards the region holding the optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import ConvergedFlat, DuplicateInput, InsufficientObservations, LipschitzViolated, ZeroLipschitz
from .gp import DirichletKernel, ObservationSet, PosteriorPoint, posterior_interval

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn

__all__ = [
    "AcquisitionParams",
    "LipschitzModel",
    "IntervalGeometry",
    "norm_cdf",
    "norm_pdf",
    "expected_improvement",
    "upper_bound",
    "in_upper_bound_region",
    "in_search_region",
    "kernel_scale_for",
    "critical_point",
    "check_lipschitz",
    "select_next_sample",
    "BOOTSTRAP",
    "next_sample",
    "bayes_optimize",
]

GOLDEN_TOL = 1e-6
FLAT_EI = 1e-15
BOOTSTRAP = (0.0, 1.0, 0.5)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)
_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class AcquisitionParams:
    xi: float = 0.0

    def __post_init__(self):
        if not self.xi >= 0.0:
            raise ValueError(f"exploration offset must be >= 0, got {self.xi}")


@dataclass(frozen=True)
class LipschitzModel:
    constant: float

    def __post_init__(self):
        if not self.constant >= 0.0 or not math.isfinite(self.constant):
            raise ValueError(f"Lipschitz constant must be finite and >= 0, got {self.constant}")


class IntervalGeometry(NamedTuple):
    delta: float
    normalized_x: float
    slope_ratio: float
    critical_point: float


def norm_cdf(z):
    if isinstance(z, np.ndarray):
        from scipy.special import erfc

        return 0.5 * erfc(-z * _INV_SQRT2)
    return 0.5 * math.erfc(-z * _INV_SQRT2)


def norm_pdf(z):
    if isinstance(z, np.ndarray):
        return _INV_SQRT2PI * np.exp(-0.5 * z * z)
    return _INV_SQRT2PI * math.exp(-0.5 * z * z)


@njit(cache=True)
def _ei(w, sigma):
    if sigma <= 0.0:
        return 0.0
    z = w / sigma
    return w * 0.5 * math.erfc(-z * 0.7071067811865476) + sigma * 0.3989422804014327 * math.exp(-0.5 * z * z)


def expected_improvement(post: PosteriorPoint, incumbent_y: float, params: AcquisitionParams = AcquisitionParams()) -> float:
    """Closed-form EI of a Gaussian posterior over ``incumbent_y + xi``; 0 when the variance is 0."""
    if post.variance <= 0.0:
        return 0.0
    return _ei(post.mean - incumbent_y - params.xi, math.sqrt(post.variance))


def expected_improvement_grid(mean, variance, incumbent_y, xi=0.0):
    mean = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    w = mean - incumbent_y - xi
    safe = np.where(sigma > 0, sigma, 1.0)
    z = w / safe
    q = w * norm_cdf(z) + sigma * norm_pdf(z)
    return np.where(sigma > 0, q, 0.0)


def upper_bound(obs: ObservationSet, lip: LipschitzModel, x) -> float:
    """Lipschitz envelope ``min_s (y_s + L |x - x_s|)``; accepts scalars or arrays."""
    if len(obs) == 0:
        raise InsufficientObservations("upper bound needs at least one observation")
    xs, ys = obs.arrays()
    if np.ndim(x) == 0:
        return float(np.min(ys + lip.constant * np.abs(float(x) - xs)))
    x = np.asarray(x, dtype=float)
    return np.min(ys[:, None] + lip.constant * np.abs(x[None, :] - xs[:, None]), axis=0)


def in_upper_bound_region(obs: ObservationSet, lip: LipschitzModel, x: float) -> bool:
    return upper_bound(obs, lip, x) > obs.incumbent.y


def in_search_region(obs: ObservationSet, kernel: DirichletKernel, params: AcquisitionParams, x: float) -> bool:
    return expected_improvement(posterior_interval(obs, kernel, x), obs.incumbent.y, params) > 0.0


def kernel_scale_for(lip: LipschitzModel) -> DirichletKernel:
    if lip.constant == 0.0:
        raise ZeroLipschitz("Lipschitz constant 0: the objective is constant, any sample is optimal")
    return DirichletKernel(lip.constant)


def critical_point(left, right, lip: LipschitzModel, x: float | None = None) -> IntervalGeometry:
    """Geometry of the envelope between two neighbouring observations.

    ``left`` and ``right`` are ``(x, y)`` pairs. The envelope peaks at the
    normalised position ``(1 + c) / 2`` with ``c`` the observed slope relative
    to the Lipschitz constant. ``x`` (optional) is mapped to interval
    coordinates; the critical point is reported there when omitted.
    """
    (x0, y0), (x1, y1) = left, right
    delta = x1 - x0
    if not delta > 0.0:
        raise ValueError("observations must be strictly increasing in x")
    if lip.constant == 0.0:
        if y1 != y0:
            raise LipschitzViolated(f"Lipschitz constant 0 but outputs differ on [{x0}, {x1}]")
        c = 0.0
    else:
        c = (y1 - y0) / (lip.constant * delta)
        if abs(c) > 1.0 + 1e-9:
            raise LipschitzViolated(
                f"slope {(y1 - y0) / delta:.6g} on [{x0:.6g}, {x1:.6g}] exceeds Lipschitz constant {lip.constant:.6g}"
            )
        c = min(1.0, max(-1.0, c))
    crit = 0.5 * (1.0 + c)
    nx = crit if x is None else (x - x0) / delta
    return IntervalGeometry(delta, nx, c, crit)


def check_lipschitz(obs: ObservationSet, lip: LipschitzModel) -> None:
    xs, ys = obs.xs, obs.ys
    for i in range(1, len(xs)):
        critical_point((xs[i - 1], ys[i - 1]), (xs[i], ys[i]), lip)


@njit(cache=True)
def _interval_ei(x, x0, x1, y0, y1, lam2, target):
    delta = x1 - x0
    mean = (y0 * (x1 - x) + y1 * (x - x0)) / delta
    var = lam2 * (x1 - x) * (x - x0) / delta
    if var <= 0.0:
        return 0.0
    return _ei(mean - target, math.sqrt(var))


@njit(cache=True)
def _golden_interval(x0, x1, y0, y1, lam2, target, tol):
    """Bracketed golden-section maximisation of EI on one interval."""
    mid = 0.5 * (x0 + x1)
    best_x = mid
    best = _interval_ei(mid, x0, x1, y0, y1, lam2, target)
    if x1 - x0 <= tol:
        return best_x, best
    a, b = x0, x1
    gold = 0.6180339887498949
    c = b - gold * (b - a)
    d = a + gold * (b - a)
    fc = _interval_ei(c, x0, x1, y0, y1, lam2, target)
    fd = _interval_ei(d, x0, x1, y0, y1, lam2, target)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - gold * (b - a)
            fc = _interval_ei(c, x0, x1, y0, y1, lam2, target)
        else:
            a, c, fc = c, d, fd
            d = a + gold * (b - a)
            fd = _interval_ei(d, x0, x1, y0, y1, lam2, target)
    xf = 0.5 * (a + b)
    ff = _interval_ei(xf, x0, x1, y0, y1, lam2, target)
    if ff > best or (ff == best and xf < best_x):
        return xf, ff
    return best_x, best


@njit(cache=True)
def _argmax_ei(xs, ys, lam, target, tol):
    n = xs.shape[0]
    lam2 = lam * lam
    ymax = np.empty(n - 1)
    bound = np.empty(n - 1)
    for i in range(n - 1):
        ymax[i] = max(ys[i], ys[i + 1])
        # EI grows with both mean and spread; the interval peak spread is lam*sqrt(delta)/2
        bound[i] = _ei(ymax[i] - target, 0.5 * lam * math.sqrt(xs[i + 1] - xs[i]))
    order = np.argsort(-bound, kind="mergesort")
    best_x = -1.0
    best = -1.0
    for j in range(n - 1):
        i = order[j]
        if bound[i] * (1.0 + 1e-12) < best:
            break
        x, q = _golden_interval(xs[i], xs[i + 1], ys[i], ys[i + 1], lam2, target, tol)
        if q > best or (q == best and x < best_x):
            best_x, best = x, q
    return best_x, best


def select_next_sample(
    obs: ObservationSet,
    kernel: DirichletKernel,
    params: AcquisitionParams = AcquisitionParams(),
    tol: float = GOLDEN_TOL,
    return_value: bool = False,
):
    """Input in [0, 1] maximising EI, searched interval by interval.

    Raises :class:`ConvergedFlat` when EI is at most ``1e-15`` everywhere.
    """
    if not obs.has_boundaries:
        raise InsufficientObservations("sample selection needs observations at x=0 and x=1")
    xs, ys = obs.arrays()
    x, q = _argmax_ei(xs, ys, float(kernel.scale), obs.incumbent.y + params.xi, tol)
    if q <= FLAT_EI:
        raise ConvergedFlat(f"maximal expected improvement {q:.3g} is negligible")
    return (x, q) if return_value else x


def next_sample(obs: ObservationSet, kernel: DirichletKernel | None, params: AcquisitionParams = AcquisitionParams()) -> float:
    """Bootstrap (lower end, upper end, midpoint) and then EI maximisation."""
    n = len(obs)
    if n < len(BOOTSTRAP):
        for x in BOOTSTRAP:
            if x not in obs:
                return x
    if kernel is None:
        raise ConvergedFlat("constant objective needs no further samples")
    return select_next_sample(obs, kernel, params)


def bayes_optimize(
    func: Callable[[float], float],
    lipschitz: float,
    budget: int,
    params: AcquisitionParams = AcquisitionParams(),
    check: bool = True,
) -> ObservationSet:
    """Maximise ``func`` on [0, 1] with at most ``budget`` evaluations.

    Stops early when expected improvement vanishes. A zero Lipschitz constant
    means a constant function, so a single sample at 0 suffices.
    """
    if budget < 1:
        raise ValueError("budget must be positive")
    lip = LipschitzModel(lipschitz)
    obs = ObservationSet()
    if lip.constant == 0.0:
        obs.insert(0.0, func(0.0))
        return obs
    kernel = kernel_scale_for(lip)
    for _ in range(budget):
        try:
            x = next_sample(obs, kernel, params)
            obs.insert(x, func(x))
        except (ConvergedFlat, DuplicateInput):
            break
        if check:
            i = obs.xs.index(x)
            if i > 0:
                critical_point(obs[i - 1], obs[i], lip)
            if i + 1 < len(obs):
                critical_point(obs[i], obs[i + 1], lip)
    return obs
