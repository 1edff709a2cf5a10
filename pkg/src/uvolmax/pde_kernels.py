"""Shared finite-difference machinery for the backward value equations.

Provides the space-time grid specification, discretized control grids for
sup/inf scans, a monotone explicit step for fully nonlinear equations
(upwind first derivatives, central second derivatives), a semi-implicit
theta step for semilinear equations, and the pointwise sup-inf Hamiltonian
of the robust wealth equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_banded

from .constraints import ConstraintSet, FULL, project
from .market import MarketSpec, VolatilityBand

SEMI_IMPLICIT = "semi_implicit_theta"
MONOTONE_EXPLICIT = "monotone_explicit"


class SolverFailureError(RuntimeError):
    """Numerical solve produced non-finite values or failed to converge."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class GridStabilityError(ValueError):
    """Explicit-scheme time step violates the monotonicity bound."""


@dataclass(frozen=True)
class PdeGridSpec:
    """Space-time grid: ``n_time`` steps, ``n_space`` cells on ``[-L, L]``.

    ``half_width`` of None derives L = 6 sqrt(a_hi * horizon) at solve time,
    large enough that domain-truncation error decays like a Gaussian tail
    for bounded payoffs.  ``scheme`` selects the time stepper; ``theta`` is
    the implicitness weight of the semi-implicit scheme.
    """

    n_time: int = 2000
    n_space: int = 400
    half_width: float | None = None
    scheme: str = SEMI_IMPLICIT
    theta: float = 0.5

    def __post_init__(self) -> None:
        if self.n_time < 8 or self.n_space < 8:
            raise ValueError("n_time and n_space must both be at least 8")
        if self.scheme not in (SEMI_IMPLICIT, MONOTONE_EXPLICIT):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta weight must lie in [0, 1]")
        if self.half_width is not None and not self.half_width > 0.0:
            raise ValueError("half_width must be positive")

    def with_scale(self, k: int) -> "PdeGridSpec":
        """Grid refined by an integer factor in both time and space."""
        if k < 1:
            raise ValueError("scale factor must be a positive integer")
        return replace(self, n_time=self.n_time * k, n_space=self.n_space * k)

    def resolve_half_width(self, a_hi: float, horizon: float) -> float:
        if self.half_width is not None:
            return self.half_width
        return 6.0 * math.sqrt(a_hi * horizon)

    def space_step(self, half_width: float) -> float:
        return 2.0 * half_width / self.n_space

    def monotone_steps_required(self, horizon: float, diff_max: float,
                                drift_max: float, half_width: float) -> int:
        """Smallest step count satisfying dt <= dx^2 / (diff_max + drift_max dx)."""
        dx = self.space_step(half_width)
        dt_max = dx * dx / (diff_max + drift_max * dx)
        return max(1, math.ceil(horizon / dt_max * (1.0 + 1e-12)))

    def require_monotone_stable(self, horizon: float, band: VolatilityBand,
                                drift_max: float, half_width: float) -> None:
        need = self.monotone_steps_required(horizon, band.a_hi, drift_max, half_width)
        if self.n_time < need:
            raise GridStabilityError(
                f"monotone scheme needs n_time >= {need} for this grid "
                f"(have {self.n_time}); refine time or coarsen space")

    @classmethod
    def from_config(cls, cfg: dict) -> "PdeGridSpec":
        return cls(
            n_time=int(cfg.get("n_time", 2000)),
            n_space=int(cfg.get("n_space", 400)),
            half_width=cfg.get("L"),
            scheme=cfg.get("scheme", SEMI_IMPLICIT),
            theta=float(cfg.get("theta", 0.5)),
        )


def space_grid(half_width: float, n_space: int) -> np.ndarray:
    """Uniform grid on [-L, L] with n_space cells; contains 0 when n_space is even."""
    return np.linspace(-half_width, half_width, n_space + 1)


@dataclass(frozen=True, eq=False)
class ControlGrid:
    """Finite control sets for the sup/inf scans.

    ``alpha_values`` discretize the volatility band and always contain both
    endpoints (the bang-bang candidates).  ``delta_values`` discretize the
    strategy constraint set intersected with a symmetric range
    ``[-delta_max, delta_max]``.
    """

    alpha_values: np.ndarray
    delta_values: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.alpha_values, dtype=float)
        d = np.asarray(self.delta_values, dtype=float)
        if a.size == 0 or d.size == 0:
            raise ValueError("control grids must be nonempty")
        if not (np.all(np.diff(a) > 0) or a.size == 1):
            raise ValueError("alpha values must be strictly ascending")
        if not (np.all(np.diff(d) > 0) or d.size == 1):
            raise ValueError("delta values must be strictly ascending")
        object.__setattr__(self, "alpha_values", a)
        object.__setattr__(self, "delta_values", d)

    @classmethod
    def build(cls, band: VolatilityBand, constraint: ConstraintSet,
              n_alpha: int = 33, n_delta: int = 161,
              delta_max: float | None = None, *,
              gamma: float | None = None, drift_max: float | None = None) -> "ControlGrid":
        """Build grids for a market.

        The default delta range is four times the unconstrained optimal
        fraction at the lowest volatility, 4 b_max / ((1+gamma) a_lo); it is
        an approximation knob for unbounded constraint sets and must be given
        explicitly when gamma/drift_max are not supplied.
        """
        alphas = np.linspace(band.a_lo, band.a_hi, max(2, n_alpha))
        if delta_max is None:
            if gamma is None or drift_max is None:
                raise ValueError("delta_max required unless gamma and drift_max are given")
            delta_max = 4.0 * drift_max / ((1.0 + gamma) * band.a_lo)
        deltas = _delta_grid(constraint, float(delta_max), max(2, n_delta))
        return cls(alphas, deltas)


def _delta_grid(constraint: ConstraintSet, delta_max: float, n_delta: int) -> np.ndarray:
    if delta_max <= 0.0:
        raise ValueError("delta_max must be positive")
    if constraint.kind == FULL:
        return np.linspace(-delta_max, delta_max, n_delta)
    pieces = []
    for lo, hi in constraint.intervals:
        lo_c, hi_c = max(lo, -delta_max), min(hi, delta_max)
        if lo_c <= hi_c:
            pieces.append((lo_c, hi_c))
    if not pieces:
        # constraint lies outside the range; keep its nearest points
        pieces = [(project(-delta_max, constraint), project(-delta_max, constraint)),
                  (project(delta_max, constraint), project(delta_max, constraint))]
    total = sum(hi - lo for lo, hi in pieces)
    values: list[np.ndarray] = []
    for lo, hi in pieces:
        if hi == lo:
            values.append(np.array([lo]))
            continue
        share = max(2, int(round(n_delta * (hi - lo) / total)) if total > 0 else n_delta)
        values.append(np.linspace(lo, hi, share))
    return np.unique(np.concatenate(values))


def step_monotone(u: np.ndarray, t: float, dt: float, dx: float, x: np.ndarray,
                  hamiltonian, end_values: tuple[float, float] | None = None
                  ) -> np.ndarray:
    """One backward-time explicit step ``u <- u + dt H``.

    ``hamiltonian(t, x_int, d_minus, d_plus, d2)`` receives both one-sided
    first differences so it can upwind per control, plus the central second
    difference; it returns the per-node Hamiltonian on the interior nodes.
    Boundary nodes take ``end_values`` when given (Dirichlet data, e.g. the
    flat-tail transport value, which keeps the full scheme monotone) and are
    filled by linear extrapolation (zero curvature) otherwise.  The caller
    is responsible for the stability bound on dt.
    """
    dp = (u[2:] - u[1:-1]) / dx
    dm = (u[1:-1] - u[:-2]) / dx
    d2 = (u[:-2] - 2.0 * u[1:-1] + u[2:]) / (dx * dx)
    h = hamiltonian(t, x[1:-1], dm, dp, d2)
    out = np.empty_like(u)
    out[1:-1] = u[1:-1] + dt * h
    if end_values is not None:
        out[0], out[-1] = end_values
    else:
        out[0] = 2.0 * out[1] - out[2]
        out[-1] = 2.0 * out[-2] - out[-3]
    if not np.all(np.isfinite(out)):
        raise SolverFailureError(
            "monotone step produced non-finite values",
            {"t": t, "dt": dt, "bad_nodes": int(np.sum(~np.isfinite(out)))})
    return out


def semi_implicit_step(u_next: np.ndarray, dt: float, dx: float, a_diff,
                       theta_w: float, source: np.ndarray) -> np.ndarray:
    """One backward theta step of ``u_t + (1/2) a u_xx = source``.

    Solves (I - theta dt D2) u = (I + (1-theta) dt D2) u_next - dt source,
    where D2 is (1/2) a times the central second difference.  The first and
    last interior rows carry zero curvature (linear-extrapolation ghosts),
    and the outermost nodes are slaved to extrapolation.  ``a_diff`` may be
    a scalar or per-node array; ``source`` is evaluated on all nodes.
    """
    stepper = ThetaDiffusion(u_next.size, dt, dx, a_diff, theta_w)
    out = stepper.solve(stepper.explicit_base(u_next), np.asarray(source, dtype=float))
    if not np.all(np.isfinite(out)):
        raise SolverFailureError("theta step produced non-finite values", {"dt": dt})
    return out


class ThetaDiffusion:
    """Precomputed theta step of ``u_t + (1/2) a u_xx = source`` for fixed
    (a, dt, dx).

    Splits the step into the iteration-independent explicit base and the
    per-iteration source solve so that fixed-point sweeps over the source
    reuse the assembled tridiagonal system.
    """

    def __init__(self, n: int, dt: float, dx: float, a_diff, theta_w: float):
        self.n = n
        self.dt = dt
        self.theta_w = theta_w
        self.c = np.broadcast_to(
            np.asarray(a_diff, dtype=float) * 0.5 * dt / (dx * dx), (n,)).copy()
        m = n - 2
        diag = 1.0 + 2.0 * theta_w * self.c[1:-1]
        off = -theta_w * self.c[1:-1]
        diag[0] = 1.0
        diag[-1] = 1.0
        ab = np.zeros((3, m))
        ab[1] = diag
        ab[0, 2:] = off[1:-1]
        ab[2, :-2] = off[1:-1]
        self.ab = ab

    def explicit_base(self, u_next: np.ndarray) -> np.ndarray:
        """Iteration-independent part (I + (1-theta) dt D2) u_next."""
        d2 = np.zeros(self.n)
        d2[2:-2] = u_next[1:-3] - 2.0 * u_next[2:-2] + u_next[3:-1]
        return u_next + (1.0 - self.theta_w) * self.c * d2

    def solve(self, base: np.ndarray, source: np.ndarray) -> np.ndarray:
        rhs = (base - self.dt * source)[1:-1]
        out = np.empty(self.n)
        out[1:-1] = solve_banded((1, 1), self.ab, rhs, check_finite=False)
        out[0] = 2.0 * out[1] - out[2]
        out[-1] = 2.0 * out[-2] - out[-3]
        return out


def inf_alpha_linear(coef, a_lo: float, a_hi: float):
    """Endpoint infimum of ``alpha -> coef * alpha`` over [a_lo, a_hi].

    This is the bang-bang shortcut for terms linear in the volatility
    control: the minimizer is a_lo for coef >= 0 and a_hi otherwise.
    Returns (value, argmin).
    """
    c = np.asarray(coef, dtype=float)
    value = np.minimum(c * a_lo, c * a_hi)
    arg = np.where(c >= 0.0, a_lo, a_hi)
    if value.ndim == 0:
        return float(value), float(arg)
    return value, arg


def g_envelope_sup(curvature, a_lo: float, a_hi: float):
    """Upper volatility envelope (1/2)(a_hi G+ - a_lo G-) of a curvature G."""
    g = np.asarray(curvature, dtype=float)
    out = 0.5 * (a_hi * np.maximum(g, 0.0) - a_lo * np.maximum(-g, 0.0))
    return float(out) if out.ndim == 0 else out


def sup_inf_hamiltonian(x: float, u_x: float, u_xx: float, t: float,
                        market: MarketSpec, controls: ControlGrid):
    """Pointwise max-min of the controlled wealth generator.

    Scans L(delta, alpha) = x delta b(t) u_x + (1/2) x^2 delta^2 alpha u_xx
    exhaustively over the control grid: inner infimum over alpha, outer
    supremum over delta.  Ties resolve to the smallest control value.
    Returns (value, argmax_delta, argmin_alpha).
    """
    b = float(market.drift(t))
    deltas = controls.delta_values
    alphas = controls.alpha_values
    lin = x * b * u_x * deltas
    quad = 0.5 * x * x * u_xx * deltas * deltas
    table = lin[:, None] + quad[:, None] * alphas[None, :]
    inner_idx = table.argmin(axis=1)
    inner = table[np.arange(deltas.size), inner_idx]
    outer_idx = int(inner.argmax())
    return (float(inner[outer_idx]), float(deltas[outer_idx]),
            float(alphas[inner_idx[outer_idx]]))
