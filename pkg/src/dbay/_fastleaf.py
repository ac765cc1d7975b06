"""Compiled budgeted loop for leaf agents whose functions are all sensor-target utilities.

With the ancestors' orientations fixed, each sensor-target function of a leaf
reduces to ``max(base, tent(omega))``, where ``base`` is the best quality
offered by the other in-scope sensors. The loop below replays exactly the
generic agent step (same bootstrap, same EI search, same tie rules and
Lipschitz check), so results match the generic path bit for bit.
"""

from __future__ import annotations

import numpy as np

from .acquisition import FLAT_EI, GOLDEN_TOL, _argmax_ei, njit
from .functions import SensorTargetUtility

OK, FLAT, DUPLICATE, VIOLATED = 0, 1, 2, 3


@njit(cache=True)
def _leaf_utility(omega, base, bearing, active, beta, wrap):
    acc = 0.0
    for n in range(base.shape[0]):
        v = 0.0
        if active[n]:
            d = omega - bearing[n]
            if wrap[n]:
                d = (d + 180.0) % 360.0 - 180.0
            d = abs(d)
            if d <= beta[n]:
                v = 1.0 - d / beta[n]
        acc += base[n] if base[n] >= v else v
    return acc


@njit(cache=True)
def leaf_loop(base, bearing, active, beta, wrap, lower, upper, lam, budget, xi, check):
    """Returns ``(xs, ys, n, best, status, where)``; ``where`` locates a violation."""
    xs = np.empty(budget)
    ys = np.empty(budget)
    n = 0
    best = -1
    width = upper - lower
    boot = (0.0, 1.0, 0.5)
    for _ in range(budget):
        if n < 3:
            x = boot[n]
        else:
            x, q = _argmax_ei(xs[:n], ys[:n], lam, ys[best] + xi, GOLDEN_TOL)
            if q <= FLAT_EI:
                return xs, ys, n, best, FLAT, -1
        if x == 0.0:
            value = lower
        elif x == 1.0:
            value = upper
        else:
            value = lower + x * width
        y = _leaf_utility(value, base, bearing, active, beta, wrap)
        i = 0
        while i < n and xs[i] < x:
            i += 1
        if i < n and xs[i] == x:
            return xs, ys, n, best, DUPLICATE, i
        for j in range(n, i, -1):
            xs[j] = xs[j - 1]
            ys[j] = ys[j - 1]
        xs[i] = x
        ys[i] = y
        n += 1
        if best < 0:
            best = i
        else:
            if i <= best:
                best += 1
            if y > ys[best] or (y == ys[best] and i < best):
                best = i
        if check:
            if i > 0:
                c = (ys[i] - ys[i - 1]) / (lam * (xs[i] - xs[i - 1]))
                if abs(c) > 1.0 + 1e-9:
                    return xs, ys, n, best, VIOLATED, i - 1
            if i + 1 < n:
                c = (ys[i + 1] - ys[i]) / (lam * (xs[i + 1] - xs[i]))
                if abs(c) > 1.0 + 1e-9:
                    return xs, ys, n, best, VIOLATED, i
    return xs, ys, n, best, OK, -1


@njit(cache=True)
def _single(omega, bearing, active, beta, wrap):
    if not active:
        return 0.0
    d = omega - bearing
    if wrap:
        d = (d + 180.0) % 360.0 - 180.0
    d = abs(d)
    if d > beta:
        return 0.0
    return 1.0 - d / beta


@njit(cache=True)
def pair_loop(p_base, p_bearing, p_active, p_beta, p_wrap, p_lower, p_upper, p_lam, p_budget,
              c_fixed, c_pbearing, c_pactive, c_bearing, c_active, c_beta, c_wrap,
              c_lower, c_upper, c_lam, c_budget, xi, check):
    """Parent loop whose only child runs :func:`leaf_loop`, both compiled.

    Returns ``(values, xs, ys, child_x, child_y, child_n, n, status)`` with the
    per-sample arrays in sampling order. Any status other than OK or FLAT
    means the caller must redo the loop on the generic path.
    """
    values = np.empty(p_budget)
    order_x = np.empty(p_budget)
    order_y = np.empty(p_budget)
    child_x = np.empty(p_budget)
    child_y = np.empty(p_budget)
    child_n = np.zeros(p_budget, dtype=np.int64)
    xs = np.empty(p_budget)
    ys = np.empty(p_budget)
    c_base = np.empty(c_fixed.shape[0])
    n = 0
    best = -1
    width = p_upper - p_lower
    boot = (0.0, 1.0, 0.5)
    status = OK
    for _ in range(p_budget):
        if n < 3:
            x = boot[n]
        else:
            x, q = _argmax_ei(xs[:n], ys[:n], p_lam, ys[best] + xi, GOLDEN_TOL)
            if q <= FLAT_EI:
                status = FLAT
                break
        if x == 0.0:
            value = p_lower
        elif x == 1.0:
            value = p_upper
        else:
            value = p_lower + x * width
        for k in range(c_fixed.shape[0]):
            v = _single(value, c_pbearing[k], c_pactive[k], c_beta[k], c_wrap[k])
            c_base[k] = c_fixed[k] if c_fixed[k] >= v else v
        cxs, cys, cn, cbest, cstatus, _ = leaf_loop(c_base, c_bearing, c_active, c_beta, c_wrap,
                                                    c_lower, c_upper, c_lam, c_budget, xi, check)
        if cstatus != OK and cstatus != FLAT:
            return values, order_x, order_y, child_x, child_y, child_n, n, cstatus
        reply = cys[cbest]
        y = _leaf_utility(value, p_base, p_bearing, p_active, p_beta, p_wrap) + (0.0 + reply)
        i = 0
        while i < n and xs[i] < x:
            i += 1
        if i < n and xs[i] == x:
            return values, order_x, order_y, child_x, child_y, child_n, n, DUPLICATE
        values[n] = value
        order_x[n] = x
        order_y[n] = y
        child_x[n] = cxs[cbest]
        child_y[n] = reply
        child_n[n] = cn
        for j in range(n, i, -1):
            xs[j] = xs[j - 1]
            ys[j] = ys[j - 1]
        xs[i] = x
        ys[i] = y
        n += 1
        if best < 0:
            best = i
        else:
            if i <= best:
                best += 1
            if y > ys[best] or (y == ys[best] and i < best):
                best = i
    return values, order_x, order_y, child_x, child_y, child_n, n, status


class SensorLeaf:
    """Per-agent preparation of :func:`leaf_loop` inputs."""

    def __init__(self, agent, scopes):
        self.agent = agent
        self.terms = []
        for f, scope in scopes:
            ev = f.evaluator
            j = scope.index(agent)
            self.terms.append((ev, j, tuple(a for a in scope if a != agent), tuple(i for i in range(len(scope)) if i != j)))
        n = len(self.terms)
        self.bearing = np.array([ev._bearing[j] for ev, j, _, _ in self.terms])
        self.active = np.array([ev._in_range[j] for ev, j, _, _ in self.terms], dtype=np.bool_)
        self.beta = np.array([ev.view_angle for ev, _, _, _ in self.terms])
        self.wrap = np.array([ev.wrap for ev, _, _, _ in self.terms], dtype=np.bool_)
        self._base = np.empty(n)

    @staticmethod
    def supports(agent, scopes) -> bool:
        return bool(scopes) and all(type(f.evaluator) is SensorTargetUtility for f, _ in scopes)

    def bases(self, samples) -> np.ndarray:
        base = self._base
        for n, (ev, _, others, idx) in enumerate(self.terms):
            b = 0.0
            for a, i in zip(others, idx):
                v = ev.single(i, samples[a])
                if v > b:
                    b = v
            base[n] = b
        return base


class SensorPair:
    """Inputs of :func:`pair_loop` for a parent and its only child, a compiled leaf.

    The child's per-term base splits into the part fixed by the parent's own
    ancestors and the single term of the parent's sensor, which varies.
    """

    def __init__(self, parent, child):
        self.parent = parent
        self.child = child
        self.own = SensorLeaf(parent.id, parent._scopes)
        leaf = child._fast
        pid = parent.id
        self.child_terms = []
        pbearing, pactive = [], []
        for ev, _, others, idx in leaf.terms:
            rest = tuple((a, i) for a, i in zip(others, idx) if a != pid)
            self.child_terms.append((ev, rest))
            at = [i for a, i in zip(others, idx) if a == pid]
            pbearing.append(ev._bearing[at[0]] if at else 0.0)
            pactive.append(bool(at) and ev._in_range[at[0]])
        self.c_pbearing = np.array(pbearing, dtype=np.float64)
        self.c_pactive = np.array(pactive, dtype=np.bool_)
        self.slot = child.ancestors.index(pid)

    @staticmethod
    def supports(parent, child) -> bool:
        return (
            child._fast is not None
            and child.compact
            and parent.sampler.params.xi == child.sampler.params.xi
            and all(type(f.evaluator) is SensorTargetUtility for f, _ in parent._scopes)
            and set(child.ancestors) == set(parent.ancestors) | {parent.id}
        )

    def fixed(self, samples) -> np.ndarray:
        out = np.empty(len(self.child_terms))
        for n, (ev, rest) in enumerate(self.child_terms):
            b = 0.0
            for a, i in rest:
                v = ev.single(i, samples[a])
                if v > b:
                    b = v
            out[n] = b
        return out

    def run(self, samples):
        p, c, own, leaf = self.parent, self.child, self.own, self.child._fast
        return pair_loop(
            own.bases(samples), own.bearing, own.active, own.beta, own.wrap,
            p.domain.lower, p.domain.upper, p.kernel.scale, p.budget,
            self.fixed(samples), self.c_pbearing, self.c_pactive,
            leaf.bearing, leaf.active, leaf.beta, leaf.wrap,
            c.domain.lower, c.domain.upper, c.kernel.scale, c.budget,
            p.sampler.params.xi, c.check_lipschitz,
        )
