"""Gaussian-process posterior for the Dirichlet (Brownian-bridge) kernel on [0, 1].

The kernel ``scale**2 * min(a, b) * (1 - max(a, b))`` is Markovian: between
two neighbouring observations the posterior depends on those two points only,
so the mean is a linear interpolation and the variance a parabola. The dense
route (:func:`posterior_dense`) conditions the same process with a Cholesky
solve and exists to check the closed forms.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_unit_inputs
from .exceptions import DuplicateInput, InsufficientObservations, OutOfDomain, SingularGramian

__all__ = [
    "Observation",
    "ObservationSet",
    "DirichletKernel",
    "PosteriorPoint",
    "TridiagonalInverse",
    "insert_observation",
    "kernel_eval",
    "posterior_interval",
    "posterior_interval_grid",
    "posterior_dense",
    "tridiagonal_inverse_elements",
    "DirichletGPRegressor",
]

VARIANCE_CLAMP = 1e-12


class Observation(NamedTuple):
    x: float
    y: float


class PosteriorPoint(NamedTuple):
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


class ObservationSet:
    """Observations of a scalar function on [0, 1], kept sorted by input.

    The incumbent is the largest output; ties go to the smallest input.
    Mutation goes through :meth:`insert` (owner only); :func:`insert_observation`
    is the copying variant.
    """

    __slots__ = ("xs", "ys", "_best")

    def __init__(self, entries=()):
        self.xs = []
        self.ys = []
        self._best = -1
        for x, y in entries:
            self.insert(x, y)

    def insert(self, x: float, y: float) -> int:
        """Insert in sorted position and return the index."""
        x = float(x)
        y = float(y)
        if not 0.0 <= x <= 1.0:
            raise OutOfDomain(f"observation input {x} outside [0, 1]")
        xs = self.xs
        i = bisect.bisect_left(xs, x)
        if i < len(xs) and xs[i] == x:
            raise DuplicateInput(f"input {x!r} already observed")
        xs.insert(i, x)
        self.ys.insert(i, y)
        best = self._best
        if best < 0:
            self._best = i
        else:
            if i <= best:
                best += 1
            by = self.ys[best]
            if y > by or (y == by and i < best):
                best = i
            self._best = best
        return i

    def copy(self) -> "ObservationSet":
        new = ObservationSet()
        new.xs = list(self.xs)
        new.ys = list(self.ys)
        new._best = self._best
        return new

    def __len__(self):
        return len(self.xs)

    def __iter__(self):
        return (Observation(x, y) for x, y in zip(self.xs, self.ys))

    def __getitem__(self, i):
        return Observation(self.xs[i], self.ys[i])

    def __contains__(self, x):
        i = bisect.bisect_left(self.xs, x)
        return i < len(self.xs) and self.xs[i] == x

    def __repr__(self):
        body = ", ".join(f"({x:g}, {y:g})" for x, y in zip(self.xs, self.ys))
        return f"ObservationSet([{body}])"

    @property
    def incumbent(self) -> Observation:
        if self._best < 0:
            raise InsufficientObservations("empty observation set has no incumbent")
        return Observation(self.xs[self._best], self.ys[self._best])

    @property
    def has_boundaries(self) -> bool:
        return len(self.xs) >= 2 and self.xs[0] == 0.0 and self.xs[-1] == 1.0

    def arrays(self):
        return np.array(self.xs), np.array(self.ys)


def insert_observation(obs: ObservationSet, x: float, y: float) -> ObservationSet:
    new = obs.copy()
    new.insert(x, y)
    return new


@dataclass(frozen=True)
class DirichletKernel:
    """``scale**2 * p(min) * g(max)`` with ``p(x) = x`` and ``g(x) = 1 - x``."""

    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0 or not math.isfinite(self.scale):
            raise ValueError(f"kernel scale must be positive, got {self.scale}")

    @staticmethod
    def p(x):
        return x

    @staticmethod
    def g(x):
        return 1.0 - x

    def __call__(self, xi: float, xj: float) -> float:
        return kernel_eval(self, xi, xj)

    def gram(self, a, b=None) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        b = a if b is None else np.asarray(b, dtype=float)
        lo = np.minimum.outer(a, b)
        hi = np.maximum.outer(a, b)
        return self.scale**2 * lo * (1.0 - hi)


def kernel_eval(kernel: DirichletKernel, xi: float, xj: float) -> float:
    if not (0.0 <= xi <= 1.0 and 0.0 <= xj <= 1.0):
        raise OutOfDomain(f"kernel inputs ({xi}, {xj}) outside [0, 1]")
    lam2 = kernel.scale * kernel.scale
    if xi <= xj:
        return lam2 * (xi * (1.0 - xj))
    return lam2 * (xj * (1.0 - xi))


def _require_bracketed(obs: ObservationSet):
    if len(obs) < 2:
        raise InsufficientObservations(f"need at least 2 observations, got {len(obs)}")
    if not obs.has_boundaries:
        raise InsufficientObservations("interval posterior needs observations at x=0 and x=1")


def posterior_interval(obs: ObservationSet, kernel: DirichletKernel, x: float) -> PosteriorPoint:
    """Closed-form posterior from the two observations bracketing ``x``."""
    _require_bracketed(obs)
    if not 0.0 <= x <= 1.0:
        raise OutOfDomain(f"query {x} outside [0, 1]")
    xs, ys = obs.xs, obs.ys
    s = bisect.bisect_left(xs, x)
    if xs[s] == x:
        return PosteriorPoint(ys[s], 0.0)
    x0, x1 = xs[s - 1], xs[s]
    y0, y1 = ys[s - 1], ys[s]
    delta = x1 - x0
    mean = (y0 * (x1 - x) + y1 * (x - x0)) / delta
    var = kernel.scale**2 * (x1 - x) * (x - x0) / delta
    if var < 0.0 and var > -VARIANCE_CLAMP:
        var = 0.0
    return PosteriorPoint(mean, var)


def posterior_interval_grid(obs: ObservationSet, kernel: DirichletKernel, x) -> tuple:
    """Vectorised :func:`posterior_interval`; returns ``(mean, variance)`` arrays."""
    _require_bracketed(obs)
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)):
        raise OutOfDomain("query outside [0, 1]")
    xs, ys = obs.arrays()
    s = np.clip(np.searchsorted(xs, x, side="left"), 1, len(xs) - 1)
    x0, x1, y0, y1 = xs[s - 1], xs[s], ys[s - 1], ys[s]
    delta = x1 - x0
    mean = (y0 * (x1 - x) + y1 * (x - x0)) / delta
    var = kernel.scale**2 * (x1 - x) * (x - x0) / delta
    hit = xs[np.searchsorted(xs, x, side="left").clip(0, len(xs) - 1)] == x
    mean = np.where(hit, ys[np.searchsorted(xs, x, side="left").clip(0, len(xs) - 1)], mean)
    var = np.where(hit, 0.0, var)
    var = np.where((var < 0.0) & (var > -VARIANCE_CLAMP), 0.0, var)
    return mean, var


@dataclass(frozen=True)
class TridiagonalInverse:
    """Non-zero bands of the inverse Gramian."""

    diagonal: np.ndarray
    off_diagonal: np.ndarray

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diagonal) + np.diag(self.off_diagonal, 1) + np.diag(self.off_diagonal, -1)


def tridiagonal_inverse_elements(obs, kernel: DirichletKernel) -> TridiagonalInverse:
    """Analytic inverse of the Gramian of a Markovian-class kernel.

    Uses the general ``p``/``g`` form. Every input must lie strictly inside
    (0, 1): the Dirichlet kernel vanishes on the boundary, so a Gramian that
    contains 0 or 1 is singular.
    """
    xs = np.asarray(obs.xs if isinstance(obs, ObservationSet) else obs, dtype=float)
    S = len(xs)
    if S < 3:
        raise InsufficientObservations(f"closed-form inverse needs S >= 3, got {S}")
    if np.any(np.diff(xs) <= 0):
        raise SingularGramian("inputs must be distinct and sorted")
    if xs[0] <= 0.0 or xs[-1] >= 1.0:
        raise SingularGramian("Gramian is singular when an input lies on the boundary of [0, 1]")
    p, g = kernel.p(xs), kernel.g(xs)
    inv_l2 = kernel.scale**-2
    # d[s] = p(x_{s+1}) g(x_s) - p(x_s) g(x_{s+1}) for consecutive pairs
    d = p[1:] * g[:-1] - p[:-1] * g[1:]
    if np.any(d <= 0):
        raise SingularGramian("degenerate neighbouring inputs")
    diag = np.empty(S)
    diag[0] = inv_l2 * p[1] / (p[0] * d[0])
    diag[-1] = inv_l2 * g[-2] / (g[-1] * d[-1])
    if S > 2:
        num = p[2:] * g[:-2] - p[:-2] * g[2:]
        diag[1:-1] = inv_l2 * num / (d[:-1] * d[1:])
    off = -inv_l2 / d
    return TridiagonalInverse(diag, off)


def posterior_dense(obs: ObservationSet, kernel: DirichletKernel, x: float) -> PosteriorPoint:
    """Posterior by dense conditioning (Cholesky) of the Dirichlet-kernel GP.

    The kernel has zero prior variance at 0 and 1, so observations there are
    absorbed into the prior mean: the straight line through the boundary
    observations (zero where absent). Interior observations are conditioned
    on through the Gramian.
    """
    if not 0.0 <= x <= 1.0:
        raise OutOfDomain(f"query {x} outside [0, 1]")
    xs, ys = obs.arrays() if len(obs) else (np.empty(0), np.empty(0))
    y_left = float(ys[0]) if len(xs) and xs[0] == 0.0 else 0.0
    y_right = float(ys[-1]) if len(xs) and xs[-1] == 1.0 else 0.0

    def prior_mean(t):
        return y_left * (1.0 - t) + y_right * t

    inner = (xs > 0.0) & (xs < 1.0)
    xi, yi = xs[inner], ys[inner]
    kxx = kernel(x, x)
    if len(xi) == 0:
        return PosteriorPoint(prior_mean(x), kxx)
    K = kernel.gram(xi)
    try:
        factor = linalg.cho_factor(K, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularGramian(str(exc)) from exc
    if np.min(np.abs(np.diag(factor[0]))) < 1e-14 * math.sqrt(np.max(np.diag(K))):
        raise SingularGramian("Gramian is numerically singular")
    kvec = kernel.gram(xi, [x])[:, 0]
    alpha = linalg.cho_solve(factor, yi - prior_mean(xi), check_finite=False)
    mean = prior_mean(x) + float(kvec @ alpha)
    var = kxx - float(kvec @ linalg.cho_solve(factor, kvec, check_finite=False))
    if var < 0.0 and var > -VARIANCE_CLAMP:
        var = 0.0
    return PosteriorPoint(mean, var)


class DirichletGPRegressor(RegressorMixin, BaseEstimator):
    """scikit-learn style regressor around the Dirichlet-kernel posterior.

    Inputs must lie in [0, 1]. When both boundary points are observed the
    closed-form interval posterior is used, otherwise the dense route.
    """

    def __init__(self, scale=1.0):
        self.scale = scale

    def fit(self, X, y):
        X, y = check_unit_inputs(X, y)
        obs = ObservationSet()
        for xv, yv in zip(X[:, 0], y):
            obs.insert(xv, yv)
        self.kernel_ = DirichletKernel(float(self.scale))
        self.observations_ = obs
        self.n_features_in_ = 1
        return self

    def predict(self, X, return_std=False):
        check_is_fitted(self, "observations_")
        X = check_unit_inputs(X)
        xq = X[:, 0]
        if self.observations_.has_boundaries:
            mean, var = posterior_interval_grid(self.observations_, self.kernel_, xq)
        else:
            pts = [posterior_dense(self.observations_, self.kernel_, float(v)) for v in xq]
            mean = np.array([p.mean for p in pts])
            var = np.array([p.variance for p in pts])
        if return_std:
            return mean, np.sqrt(np.maximum(var, 0.0))
        return mean
