"""Exact feasibility for variable credit limits sharing one pool.

The system, for one facility with accounts ``a = 1..k`` and exchange factors
``r_a > 0``, is::

    lower_a <= l_a <= upper_a,   l_a <= net_a,   r . l  (>= | ==)  pool

With all ``r_a`` positive and a single coupling relation, the box
``[lower, min(upper, net)]`` is feasible iff ``r . lower <= pool`` (equality
case only) and ``r . min(upper, net) >= pool``; no LP solver is needed.
"""

from __future__ import annotations

import numpy as np

TOL = 1e-9


def _arrays(lower, upper, exchange):
    return (
        np.asarray(lower, dtype=float),
        np.asarray(upper, dtype=float),
        np.asarray(exchange, dtype=float),
    )


def _weighted_sum(r: np.ndarray, v: np.ndarray) -> np.ndarray:
    # r > 0, so infinite entries propagate without producing nan from 0 * inf
    return np.sum(r * v, axis=-1)


def pool_feasible(net, lower, upper, exchange, pool: float, relation: str, tol: float = TOL):
    """Vectorised over leading axes of ``net`` (last axis = facility accounts)."""
    lower, upper, r = _arrays(lower, upper, exchange)
    net = np.asarray(net, dtype=float)
    cap = np.minimum(upper, net)
    ok = np.all(lower <= cap + tol, axis=-1)
    ok &= _weighted_sum(r, cap) >= pool - tol
    if relation == "==":
        ok &= _weighted_sum(r, np.broadcast_to(lower, cap.shape)) <= pool + tol
    return ok


def tightened_bounds(lower, upper, exchange, pool: float, relation: str):
    """Per-coordinate bounds implied by the box and the pool relation (one elimination pass)."""
    lower, upper, r = _arrays(lower, upper, exchange)
    lo, hi = lower.copy(), upper.copy()
    for a in range(r.size):
        others = np.delete(np.arange(r.size), a)
        rest_hi = _weighted_sum(r[others], upper[others]) if others.size else 0.0
        lo[a] = max(lo[a], (pool - rest_hi) / r[a])
        if relation == "==":
            rest_lo = _weighted_sum(r[others], lower[others]) if others.size else 0.0
            hi[a] = min(hi[a], (pool - rest_lo) / r[a])
    return lo, hi


def _fit_relation(lo, hi, r, pool, start):
    """Move from ``start`` along the segment between the box corners until ``r . l == pool``."""
    s_lo, s_hi = float(r @ lo), float(r @ hi)
    if s_hi == s_lo:
        return start
    t = min(1.0, max(0.0, (pool - s_lo) / (s_hi - s_lo)))
    return lo + t * (hi - lo)


def initial_limits(lower, upper, exchange, pool: float, relation: str) -> np.ndarray:
    """A feasible starting point: centroid of the implied box, moved onto the pool relation if needed."""
    _, _, r = _arrays(lower, upper, exchange)
    lo, hi = tightened_bounds(lower, upper, exchange, pool, relation)
    lo_f = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
    hi_f = np.where(np.isfinite(hi), hi, lo_f)
    centre = (lo_f + hi_f) / 2
    s = float(r @ centre)
    if (relation == "==" and s != pool) or (relation == ">=" and s < pool):
        return _fit_relation(lo_f, hi_f, r, pool, centre)
    return centre


def choose_limits(net, lower, upper, exchange, pool: float, relation: str):
    """Pick limits for one facility given the net positions of its accounts.

    Returns ``(limits, feasible)``. When the system is infeasible the limits
    minimise ``sum(max(0, l - net)**2)`` subject to the box and the pool
    relation (the relation itself is violated only when the box cannot meet it).
    """
    lower, upper, r = _arrays(lower, upper, exchange)
    net = np.asarray(net, dtype=float)
    cap = np.minimum(upper, net)
    if bool(pool_feasible(net, lower, upper, r, pool, relation)):
        return _lower_to_pool(cap, lower, r, pool, relation), True

    start = np.clip(net, lower, upper)
    if float(r @ start) >= pool:
        if relation == "==":
            return _lower_to_pool(start, lower, r, pool, relation), False
        return start, False
    if float(r @ upper) < pool:
        return upper.copy(), False

    def limits(mu):
        return np.clip(net + mu * r / 2, lower, upper)

    mu_hi = 1.0
    while float(r @ limits(mu_hi)) < pool:
        mu_hi *= 2
    mu_lo = 0.0
    for _ in range(200):
        mid = (mu_lo + mu_hi) / 2
        if float(r @ limits(mid)) < pool:
            mu_lo = mid
        else:
            mu_hi = mid
    return limits(mu_hi), False


def _lower_to_pool(start, lower, r, pool, relation):
    """Lower coordinates of ``start`` (in order, not below ``lower``) until ``r . l == pool``."""
    limits = np.array(start, dtype=float)
    if relation != "==":
        return limits
    excess = float(r @ limits) - pool
    for a in range(limits.size):
        if excess <= 0:
            break
        drop = min(excess / r[a], limits[a] - lower[a])
        limits[a] -= drop
        excess -= drop * r[a]
    return limits
