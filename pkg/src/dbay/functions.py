"""Built-in utility evaluators and the registry used by problem files.

Each evaluator is a callable on floats (one per scope variable) with a
``grid`` method for numpy broadcasting, a ``kind`` tag and ``params()`` so it
round-trips through JSON.
"""

from __future__ import annotations

import bisect
import itertools
import math

import numpy as np

__all__ = ["SensorTargetUtility", "PiecewiseLinearTable", "REGISTRY", "make_evaluator", "angle_difference"]


def angle_difference(a, b, wrap=True):
    """Signed difference ``a - b`` in degrees, wrapped into [-180, 180) if ``wrap``."""
    d = a - b
    if not wrap:
        return d
    if isinstance(d, np.ndarray):
        return np.mod(d + 180.0, 360.0) - 180.0
    return (d + 180.0) % 360.0 - 180.0


class SensorTargetUtility:
    """Observation quality of one target by the best-oriented sensor in scope.

    For sensor ``i`` at distance at most ``sensor_range`` from the target,
    utility decays linearly from 1 (aimed at the target) to 0 at an angular
    offset of ``view_angle`` degrees; out-of-range sensors contribute 0.
    """

    kind = "sensor-target"

    def __init__(self, target, sensors, view_angle=36.0, sensor_range=1.0, wrap=True):
        if view_angle <= 0 or sensor_range <= 0:
            raise ValueError("view_angle and sensor_range must be positive")
        self.target = (float(target[0]), float(target[1]))
        self.sensors = [(float(p[0]), float(p[1])) for p in sensors]
        self.view_angle = float(view_angle)
        self.sensor_range = float(sensor_range)
        self.wrap = bool(wrap)
        tx, ty = self.target
        self._bearing = [math.degrees(math.atan2(ty - py, tx - px)) for px, py in self.sensors]
        self._in_range = [math.hypot(tx - px, ty - py) <= self.sensor_range for px, py in self.sensors]

    def single(self, index, omega):
        if not self._in_range[index]:
            return 0.0
        d = abs(angle_difference(omega, self._bearing[index], self.wrap))
        if d > self.view_angle:
            return 0.0
        return 1.0 - d / self.view_angle

    def __call__(self, *omegas):
        best = 0.0
        for i, omega in enumerate(omegas):
            v = self.single(i, omega)
            if v > best:
                best = v
        return best

    def grid(self, *omegas):
        out = None
        for i, omega in enumerate(omegas):
            omega = np.asarray(omega, dtype=float)
            if self._in_range[i]:
                d = np.abs(angle_difference(omega, self._bearing[i], self.wrap))
                v = np.where(d <= self.view_angle, 1.0 - d / self.view_angle, 0.0)
            else:
                v = np.zeros_like(omega)
            out = v if out is None else np.maximum(out, v)
        return out

    def slope_bounds(self):
        """Per-scope-variable slope bound in utility per degree."""
        return [1.0 / self.view_angle if r else 0.0 for r in self._in_range]

    def params(self):
        return {
            "target": list(self.target),
            "sensors": [list(p) for p in self.sensors],
            "view_angle": self.view_angle,
            "sensor_range": self.sensor_range,
            "wrap": self.wrap,
        }


class PiecewiseLinearTable:
    """Multilinear interpolation of a table on a rectilinear grid.

    ``axes[j]`` are the strictly increasing breakpoints of scope variable ``j``
    and ``values`` has shape ``(len(axes[0]), len(axes[1]), ...)``. Queries
    outside the breakpoints are clamped to the boundary.
    """

    kind = "piecewise-linear"

    def __init__(self, axes, values):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != len(self.axes):
            raise ValueError("values must have one dimension per axis")
        for j, a in enumerate(self.axes):
            if a.ndim != 1 or len(a) < 2 or np.any(np.diff(a) <= 0):
                raise ValueError(f"axis {j} must be strictly increasing with at least 2 points")
            if self.values.shape[j] != len(a):
                raise ValueError(f"axis {j} length does not match values")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("table values must be finite")
        self._axes_list = [a.tolist() for a in self.axes]
        self._values_list = self.values.tolist()

    def slope_bounds(self):
        out = []
        for j, a in enumerate(self.axes):
            dv = np.abs(np.diff(self.values, axis=j))
            shape = [1] * self.values.ndim
            shape[j] = len(a) - 1
            out.append(float(np.max(dv / np.diff(a).reshape(shape))))
        return out

    def __call__(self, *xs):
        locs = []
        for axis, x in zip(self._axes_list, xs):
            x = min(max(x, axis[0]), axis[-1])
            i = min(bisect.bisect_right(axis, x) - 1, len(axis) - 2)
            t = (x - axis[i]) / (axis[i + 1] - axis[i])
            locs.append((i, t))
        total = 0.0
        for corner in itertools.product((0, 1), repeat=len(locs)):
            w = 1.0
            node = self._values_list
            for (i, t), c in zip(locs, corner):
                w *= t if c else 1.0 - t
                node = node[i + c]
            total += w * node
        return total

    def grid(self, *xs):
        xs = np.broadcast_arrays(*[np.asarray(x, dtype=float) for x in xs])
        idx, ts = [], []
        for axis, x in zip(self.axes, xs):
            x = np.clip(x, axis[0], axis[-1])
            i = np.clip(np.searchsorted(axis, x, side="right") - 1, 0, len(axis) - 2)
            idx.append(i)
            ts.append((x - axis[i]) / (axis[i + 1] - axis[i]))
        total = np.zeros(xs[0].shape)
        for corner in itertools.product((0, 1), repeat=len(idx)):
            w = np.ones(xs[0].shape)
            for t, c in zip(ts, corner):
                w = w * (t if c else 1.0 - t)
            total = total + w * self.values[tuple(i + c for i, c in zip(idx, corner))]
        return total

    def params(self):
        return {"axes": self._axes_list, "values": self._values_list}


REGISTRY = {
    SensorTargetUtility.kind: SensorTargetUtility,
    PiecewiseLinearTable.kind: PiecewiseLinearTable,
}


def make_evaluator(kind, params):
    try:
        cls = REGISTRY[kind]
    except KeyError:
        raise ValueError(f"unknown function kind {kind!r}; known: {sorted(REGISTRY)}") from None
    return cls(**params)
