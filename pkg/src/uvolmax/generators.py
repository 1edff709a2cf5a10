"""Quadratic drivers of the backward value equations and the projected strategies.

Each utility variant has a driver F(t, z, a) that is quadratic in the control
z through a squared distance to the volatility-scaled constraint set, and an
optimal strategy obtained by projecting an unconstrained target onto that
scaled set.  The exponential strategy is a cash amount pi; the power and log
strategies are wealth fractions rho.

All functions are pure and broadcast over ``t``, ``z``, ``a`` (and ``pi``).
For scalar ``a`` the scaled set is formed literally; for array ``a`` the
exact scaling identity dist(x, A_a) = sqrt(a) dist(x / sqrt(a), A) is used.
"""

from __future__ import annotations

import numpy as np

from .constraints import ConstraintSet, distance, project, scale_set
from .market import DriftCurve


def _prepare(t, a, drift: DriftCurve):
    """Return (b(t), sqrt(a), theta) with positivity check on ``a``."""
    a_arr = np.asarray(a, dtype=float)
    if np.any(a_arr <= 0.0):
        raise ValueError(f"volatility level must be positive, got {a}")
    bt = np.asarray(drift(t), dtype=float)
    root_a = np.sqrt(a_arr)
    return bt, root_a, bt / root_a


def _dist_scaled(x, a, root_a, constraint: ConstraintSet):
    if np.ndim(a) == 0:
        return distance(x, scale_set(constraint, float(a)))
    return root_a * distance(np.asarray(x) / root_a, constraint)


def _proj_scaled(x, a, root_a, constraint: ConstraintSet):
    if np.ndim(a) == 0:
        return project(x, scale_set(constraint, float(a)))
    return root_a * project(np.asarray(x) / root_a, constraint)


def _ret(out):
    return float(out) if np.ndim(out) == 0 else out


def gen_exponential(t, z, a, beta: float, constraint: ConstraintSet, drift: DriftCurve):
    """Exponential-utility driver.

    F = -(beta/2) dist^2(sqrt(a) z + theta/beta, A_a) + z b(t)
        + theta^2 / (2 beta),
    with theta = b(t)/sqrt(a) and A_a the sqrt(a)-scaled constraint set.
    """
    bt, root_a, th = _prepare(t, a, drift)
    zs = np.asarray(z, dtype=float)
    d = _dist_scaled(root_a * zs + th / beta, a, root_a, constraint)
    return _ret(-0.5 * beta * d * d + zs * bt + th * th / (2.0 * beta))


def gen_power(t, z, a, gamma: float, constraint: ConstraintSet, drift: DriftCurve):
    """Power-utility driver.

    With w = -sqrt(a) z + theta:
    F = -(gamma (1+gamma) / 2) dist^2(w / (1+gamma), A_a)
        + gamma w^2 / (2 (1+gamma)) + (sqrt(a) z)^2 / 2.
    """
    _, root_a, th = _prepare(t, a, drift)
    zs = np.asarray(z, dtype=float)
    w = -root_a * zs + th
    d = _dist_scaled(w / (1.0 + gamma), a, root_a, constraint)
    return _ret(-0.5 * gamma * (1.0 + gamma) * d * d
                + gamma * w * w / (2.0 * (1.0 + gamma))
                + 0.5 * (root_a * zs) ** 2)


def gen_log(t, a, constraint: ConstraintSet, drift: DriftCurve):
    """Log-utility driver F = -(1/2) dist^2(theta, A_a) + theta^2 / 2.

    Does not depend on the control z.
    """
    _, root_a, th = _prepare(t, a, drift)
    d = _dist_scaled(th, a, root_a, constraint)
    return _ret(-0.5 * d * d + 0.5 * th * th)


def strategy_exponential(z, a, t, beta: float, constraint: ConstraintSet, drift: DriftCurve):
    """Optimal cash position: sqrt(a) pi* is the projection of
    sqrt(a) z + theta/beta onto the scaled constraint set."""
    _, root_a, th = _prepare(t, a, drift)
    zs = np.asarray(z, dtype=float)
    target = root_a * zs + th / beta
    return _ret(_proj_scaled(target, a, root_a, constraint) / root_a)


def strategy_power(z, a, t, gamma: float, constraint: ConstraintSet, drift: DriftCurve):
    """Optimal wealth fraction: sqrt(a) rho* is the projection of
    (-sqrt(a) z + theta) / (1+gamma) onto the scaled constraint set."""
    _, root_a, th = _prepare(t, a, drift)
    zs = np.asarray(z, dtype=float)
    target = (-root_a * zs + th) / (1.0 + gamma)
    return _ret(_proj_scaled(target, a, root_a, constraint) / root_a)


def strategy_log(a, t, constraint: ConstraintSet, drift: DriftCurve):
    """Optimal wealth fraction: sqrt(a) rho* is the projection of theta
    onto the scaled constraint set."""
    _, root_a, th = _prepare(t, a, drift)
    return _ret(_proj_scaled(th, a, root_a, constraint) / root_a)


def excess_drift_exponential(pi, z, a, t, beta: float, constraint: ConstraintSet,
                             drift: DriftCurve):
    """Normalized drift penalty of playing ``pi`` against control ``z``.

    Returns v/beta = (beta/2) |sqrt(a) pi - (sqrt(a) z + theta/beta)|^2
                     - z b(t) - theta^2/(2 beta) + F(t, z, a).
    By construction this equals (beta/2) times the gap between the squared
    distance of sqrt(a) pi to the projection target and the squared distance
    of the target to the scaled set, so it is nonnegative whenever
    sqrt(a) pi lies in the scaled set, with equality exactly at projections.
    """
    bt, root_a, th = _prepare(t, a, drift)
    pis = np.asarray(pi, dtype=float)
    zs = np.asarray(z, dtype=float)
    target = root_a * zs + th / beta
    gen = gen_exponential(t, z, a, beta, constraint, drift)
    return _ret(0.5 * beta * (root_a * pis - target) ** 2
                - zs * bt - th * th / (2.0 * beta) + gen)
