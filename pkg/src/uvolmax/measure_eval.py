"""Per-measure valuation for a fixed deterministic volatility path.

Under one admissible measure the volatility path is known, so the backward
value equation collapses: with deterministic data the control vanishes and
y0 = xi - integral of F(t, 0, a(t)), evaluated by exact or composite
quadrature.  With a terminal payoff g(B_T) the value solves the semilinear
backward equation u_t + (1/2) a(t) u_xx = F(t, u_x, a(t)), u(T, .) = g, and
y0 = u(0, 0).  Classical constant-volatility closed forms are provided as
oracles for the min-max checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from . import market as mkt
from .generators import gen_exponential, gen_log, gen_power
from .market import MarketSpec, UtilitySpec
from .pde_kernels import (MONOTONE_EXPLICIT, PdeGridSpec, SolverFailureError,
                          ThetaDiffusion, space_grid, step_monotone)

# composite quadrature resolution: step no coarser than horizon / 400
QUADRATURE_PANELS = 400

FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAX_ITER = 50


class UnsupportedLiabilityError(ValueError):
    """Liability kind not handled by the requested evaluator."""


@dataclass(frozen=True, eq=False)
class VolatilityPath:
    """Piecewise-constant deterministic volatility candidate on [0, T].

    ``grid`` holds the K+1 ascending breakpoints covering the horizon and
    ``values`` the K per-interval quadratic-variation densities.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or v.ndim != 1 or g.size != v.size + 1 or v.size < 1:
            raise ValueError("path needs K+1 breakpoints and K values")
        if not np.all(np.diff(g) > 0):
            raise ValueError("path breakpoints must be strictly ascending")
        if not np.all(v > 0):
            raise ValueError("path values must be positive")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, a: float, horizon: float) -> "VolatilityPath":
        return cls(np.array([0.0, horizon]), np.array([float(a)]))

    @classmethod
    def from_config(cls, cfg: dict) -> "VolatilityPath":
        return cls(np.asarray(cfg["grid"], float), np.asarray(cfg["values"], float))

    def to_config(self) -> dict:
        return {"grid": self.grid.tolist(), "values": self.values.tolist()}

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    @property
    def n_intervals(self) -> int:
        return self.values.size

    def value_at(self, t):
        """Piecewise-constant evaluation, right-continuous, last value at T."""
        idx = np.clip(np.searchsorted(self.grid, t, side="right") - 1,
                      0, self.values.size - 1)
        out = self.values[idx]
        return float(out) if np.ndim(out) == 0 else out

    def with_value(self, i: int, a: float) -> "VolatilityPath":
        v = self.values.copy()
        v[i] = a
        return VolatilityPath(self.grid, v)


@dataclass(frozen=True, eq=False)
class PdeSolution:
    """Space-time value field u and its spatial gradient on the grid."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    ux: np.ndarray
    warnings: tuple[str, ...] = ()

    def initial_value(self) -> float:
        """u at (t=0, x=0)."""
        return float(np.interp(0.0, self.x, self.u[0]))

    def value_at_time0(self, xq):
        out = np.interp(np.asarray(xq, dtype=float), self.x, self.u[0])
        return float(out) if out.ndim == 0 else out

    def write_csv(self, fh) -> None:
        """Emit long-format rows t, x, u, u_x."""
        fh.write("t,x,u,u_x\n")
        for i, ti in enumerate(self.t):
            for j, xj in enumerate(self.x):
                fh.write(f"{ti:.17g},{xj:.17g},{self.u[i, j]:.17g},{self.ux[i, j]:.17g}\n")


def generator_at(market: MarketSpec, t, z, a):
    """Driver F(t, z, a) for the market's utility; z ignored for log."""
    u = market.utility
    if u.kind == mkt.EXPONENTIAL:
        return gen_exponential(t, z, a, u.beta, market.constraint, market.drift)
    if u.kind == mkt.POWER:
        return gen_power(t, z, a, u.gamma, market.constraint, market.drift)
    return gen_log(t, a, market.constraint, market.drift)


def _check_path(market: MarketSpec, path: VolatilityPath) -> None:
    if abs(path.grid[0]) > 1e-12 or abs(path.horizon - market.horizon) > 1e-9:
        raise ValueError("path breakpoints must cover [0, horizon]")
    if not market.band.contains(path.values):
        raise ValueError("path values must lie within the volatility band")


def _segment_bounds(market: MarketSpec, path: VolatilityPath) -> np.ndarray:
    cuts = np.concatenate([path.grid, market.drift.breakpoints(market.horizon)])
    return np.unique(np.clip(cuts, 0.0, market.horizon))


def _simpson_nodes(t0: float, t1: float, max_step: float) -> tuple[np.ndarray, np.ndarray]:
    n = max(2, 2 * math.ceil((t1 - t0) / max_step / 2.0))
    nodes = np.linspace(t0, t1, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= (t1 - t0) / n / 3.0
    return nodes, w


def integrate_generator_at_zero(market: MarketSpec, path: VolatilityPath) -> float:
    """Integral of F(t, 0, a(t)) over the horizon.

    Exact per piece for constant drift (the integrand is constant there);
    composite Simpson with step at most horizon/400 otherwise, on segments
    split at path and drift breakpoints.
    """
    bounds = _segment_bounds(market, path)
    max_step = market.horizon / QUADRATURE_PANELS
    total = 0.0
    for t0, t1 in zip(bounds[:-1], bounds[1:]):
        a = path.value_at(0.5 * (t0 + t1))
        if market.drift.kind == mkt.CONSTANT:
            total += float(generator_at(market, t0, 0.0, a)) * (t1 - t0)
        else:
            nodes, w = _simpson_nodes(t0, t1, max_step)
            total += float(np.dot(w, generator_at(market, nodes, 0.0, a)))
    return total


def y0_deterministic(market: MarketSpec, path: VolatilityPath) -> float:
    """Per-measure value for zero or deterministic liability.

    With deterministic data the control term vanishes, so the backward value
    is xi minus the time integral of the driver at z = 0.
    """
    if market.liability.kind == mkt.MARKOV:
        raise UnsupportedLiabilityError(
            "terminal payoff depends on the canonical process; use y0_markovian")
    _check_path(market, path)
    xi = market.liability.cash_value
    return xi - integrate_generator_at_zero(market, path)


def _time_steps(path: VolatilityPath, n_time: int) -> list[tuple[float, float, float]]:
    """Backward step list (t_next, dt, a) aligned with the path pieces."""
    horizon = path.horizon
    dt_target = horizon / n_time
    steps: list[tuple[float, float, float]] = []
    for i in range(path.n_intervals - 1, -1, -1):
        t0, t1 = path.grid[i], path.grid[i + 1]
        nsub = max(1, math.ceil((t1 - t0) / dt_target - 1e-12))
        dt = (t1 - t0) / nsub
        for k in range(nsub):
            steps.append((t1 - k * dt, dt, float(path.values[i])))
    return steps


def _central_gradient(u: np.ndarray, dx: float) -> np.ndarray:
    g = np.empty_like(u)
    g[1:-1] = (u[2:] - u[:-2]) / (2.0 * dx)
    g[0] = (u[1] - u[0]) / dx
    g[-1] = (u[-1] - u[-2]) / dx
    return g


def _solve_backward_fixed_path(market: MarketSpec, path: VolatilityPath,
                               grid: PdeGridSpec, store: bool,
                               force_generic: bool = False):
    """Backward semilinear solve along a fixed volatility path.

    Semi-implicit theta stepping: diffusion weighted by theta across levels,
    the nonlinear source evaluated at the gradient of the theta-blend via a
    damped fixed-point iteration (relative tolerance 1e-10, at most 50
    sweeps per step).  The tridiagonal system is assembled once per path
    piece since the diffusion coefficient is constant there.
    """
    half_width = grid.resolve_half_width(market.band.a_hi, market.horizon)
    x = space_grid(half_width, grid.n_space)
    dx = x[1] - x[0]
    monotone = grid.scheme == MONOTONE_EXPLICIT
    theta_w = grid.theta

    warnings: list[str] = []
    if market.liability.kind == mkt.MARKOV:
        payoff_dx = float(np.min(np.diff(market.liability.payoff_x)))
        if payoff_dx < dx:
            warnings.append("payoff tabulation finer than the space grid; "
                            "kinks may be under-resolved")

    u = np.asarray(market.liability.terminal_payoff(x), dtype=float)
    if monotone:
        drift_max = market.drift.max_abs(market.horizon)
        grid.require_monotone_stable(market.horizon, market.band, drift_max, half_width)

    rows = [u.copy()] if store else None
    times = [market.horizon] if store else None
    max_iters_seen = 0
    dt_target = market.horizon / grid.n_time
    affine_source = (not force_generic and not monotone
                     and market.constraint.kind == "full"
                     and market.utility.kind == mkt.EXPONENTIAL)

    for i in range(path.n_intervals - 1, -1, -1):
        t0, t1 = float(path.grid[i]), float(path.grid[i + 1])
        a = float(path.values[i])
        nsub = max(1, math.ceil((t1 - t0) / dt_target - 1e-12))
        dt = (t1 - t0) / nsub
        if monotone:
            stepper = None
        elif affine_source:
            stepper = _LinearAdvectionTheta(x.size, dt, dx, a, theta_w)
        else:
            stepper = ThetaDiffusion(x.size, dt, dx, a, theta_w)
        src_seed = None
        for k in range(nsub):
            t_hi = t1 - k * dt
            t_new = t_hi - dt
            if monotone:
                u = _monotone_fixed_path_step(market, u, t_hi, dt, dx, x, a)
            elif affine_source:
                t_eval = theta_w * t_new + (1.0 - theta_w) * t_hi
                f0 = float(generator_at(market, t_eval, 0.0, a))
                u = stepper.step(u, float(market.drift(t_eval)), f0)
            else:
                t_eval = theta_w * t_new + (1.0 - theta_w) * t_hi
                u, iters, src_seed = _theta_source_fixed_point(
                    market, stepper, u, t_eval, dt, dx, a, theta_w, src_seed)
                max_iters_seen = max(max_iters_seen, iters)
            if store:
                rows.append(u.copy())
                times.append(t_new)
    if affine_source and not np.all(np.isfinite(u)):
        raise SolverFailureError("theta step produced non-finite values", {})

    if not store:
        return float(np.interp(0.0, x, u))

    t_arr = np.asarray(times[::-1])
    u_arr = np.asarray(rows[::-1])
    ux_arr = np.stack([_central_gradient(row, dx) for row in u_arr])
    return PdeSolution(t_arr, x, u_arr, ux_arr, tuple(warnings)), max_iters_seen


class _LinearAdvectionTheta:
    """Theta step of u_t + (1/2) a u_xx = b(t) u_x + f0(t) in one solve.

    For the unconstrained exponential driver the source is affine in the
    gradient, so the fixed point of the generic stepper solves exactly this
    linear system; folding the advection into the matrix removes the
    iteration.  The diffusion part is assembled once per path piece, the
    drift part re-weighted by b(t) each step.
    """

    def __init__(self, n: int, dt: float, dx: float, a: float, theta_w: float):
        self.n, self.dt, self.dx, self.theta_w = n, dt, dx, theta_w
        self.c = 0.5 * a * dt / (dx * dx)
        m = n - 2
        diag = np.full(m, 1.0 + 2.0 * theta_w * self.c)
        diag[0] = diag[-1] = 1.0
        ab = np.zeros((3, m))
        ab[1] = diag
        ab[0, 2:] = -theta_w * self.c
        ab[2, :-2] = -theta_w * self.c
        self.ab_diffusion = ab
        # first-derivative pattern with linear-extrapolation ghosts at the
        # first and last interior rows
        d1 = np.zeros((3, m))
        d1[0, 2:] = 1.0 / (2.0 * dx)
        d1[2, :-2] = -1.0 / (2.0 * dx)
        d1[0, 1] = 1.0 / dx
        d1[1, 0] = -1.0 / dx
        d1[2, m - 2] = -1.0 / dx
        d1[1, m - 1] = 1.0 / dx
        self.d1 = d1

    def step(self, u_old: np.ndarray, b_t: float, f0: float) -> np.ndarray:
        n, dt, theta_w = self.n, self.dt, self.theta_w
        d2 = np.zeros(n)
        d2[2:-2] = u_old[1:-3] - 2.0 * u_old[2:-2] + u_old[3:-1]
        grad = _central_gradient(u_old, self.dx)
        rhs = (u_old + (1.0 - theta_w) * (self.c * d2 - dt * b_t * grad)
               - dt * f0)[1:-1]
        ab = self.ab_diffusion + (theta_w * dt * b_t) * self.d1
        out = np.empty(n)
        out[1:-1] = solve_banded((1, 1), ab, rhs, check_finite=False)
        out[0] = 2.0 * out[1] - out[2]
        out[-1] = 2.0 * out[-2] - out[-3]
        return out


def _theta_source_fixed_point(market: MarketSpec, stepper, u_old: np.ndarray,
                              t_eval: float, dt: float, dx: float, a: float,
                              theta_w: float, src_seed: np.ndarray | None
                              ) -> tuple[np.ndarray, int, np.ndarray]:
    """One theta step with damped fixed point on the source gradient.

    The previous step's converged source seeds the iteration; the source
    varies smoothly in time, so the seed typically leaves one confirming
    sweep to reach tolerance.
    """
    base = stepper.explicit_base(u_old)
    u_k = u_old
    src = src_seed
    omega = 1.0
    prev_res = math.inf
    for it in range(FIXED_POINT_MAX_ITER):
        if it > 0 or src is None:
            blend = theta_w * u_k + (1.0 - theta_w) * u_old if it else u_old
            src = np.asarray(generator_at(market, t_eval,
                                          _central_gradient(blend, dx), a),
                             dtype=float)
        u_new = stepper.solve(base, src)
        if omega != 1.0:
            u_new = omega * u_new + (1.0 - omega) * u_k
        res = float(np.max(np.abs(u_new - u_k))) / (1.0 + float(np.max(np.abs(u_new))))
        u_k = u_new
        if res <= FIXED_POINT_TOL:
            if not np.all(np.isfinite(u_k)):
                raise SolverFailureError("theta step produced non-finite values",
                                         {"t": t_eval, "dt": dt})
            blend = theta_w * u_k + (1.0 - theta_w) * u_old
            src = np.asarray(generator_at(market, t_eval,
                                          _central_gradient(blend, dx), a),
                             dtype=float)
            return u_k, it + 1, src
        if res > prev_res:
            omega = max(0.25, omega * 0.5)
        prev_res = res
    raise SolverFailureError("source fixed point did not converge",
                             {"t": t_eval, "dt": dt, "residual": prev_res})


def _monotone_fixed_path_step(market: MarketSpec, u, t_hi, dt, dx, x, a):
    """Explicit monotone step for the fixed-path equation.

    The source is linearized around the central gradient: the gradient side
    is chosen upwind against the local source slope dF/dz so the update has
    positive stencil coefficients for drift-dominated resolutions.  Boundary
    nodes follow the flat-tail transport du/dt = F(t, 0, a) exactly (the
    payoff is held constant outside its tabulation), which keeps the whole
    update monotone in the stencil values.
    """
    def ham(t, x_int, dm, dp, d2):
        pc = 0.5 * (dm + dp)
        eps = 1e-7 * (1.0 + np.max(np.abs(pc)))
        slope = (np.asarray(generator_at(market, t, pc + eps, a))
                 - np.asarray(generator_at(market, t, pc - eps, a))) / (2.0 * eps)
        p_sel = np.where(slope <= 0.0, dp, dm)
        return 0.5 * a * d2 - generator_at(market, t, p_sel, a)

    shift = dt * float(generator_at(market, t_hi, 0.0, a))
    return step_monotone(u, t_hi, dt, dx, x, ham,
                         end_values=(u[0] - shift, u[-1] - shift))


def y0_markovian(market: MarketSpec, path: VolatilityPath,
                 grid: PdeGridSpec | None = None) -> PdeSolution:
    """Per-measure value field for a terminal payoff of the canonical process.

    Returns the full backward solution; the scalar value is
    ``solution.initial_value()``.
    """
    if market.utility.kind != mkt.EXPONENTIAL:
        raise ValueError("payoff valuation needs exponential utility; "
                         "power/log carry zero liability and reduce to y0_deterministic")
    _check_path(market, path)
    grid = grid or PdeGridSpec()
    solution, _ = _solve_backward_fixed_path(market, path, grid, store=True)
    return solution


def y0_markovian_value(market: MarketSpec, path: VolatilityPath,
                       grid: PdeGridSpec | None = None) -> float:
    """Scalar u(0, 0) without storing the field (used by the path search)."""
    if market.utility.kind != mkt.EXPONENTIAL:
        raise ValueError("payoff valuation needs exponential utility")
    _check_path(market, path)
    grid = grid or PdeGridSpec()
    return _solve_backward_fixed_path(market, path, grid, store=False)


def merton_value_constant_vol(utility: UtilitySpec, x: float, b: float,
                              a: float, horizon: float) -> float:
    """Classical single-measure value with constant drift and volatility,
    no constraint, no liability.

    Exponential: -exp(-beta x - b^2 T / (2 a)).
    Power:       exp(-(gamma/(1+gamma)) b^2 T / (2 a)) U(x).
    Log:         log(x) + b^2 T / (2 a).
    """
    if not a > 0.0:
        raise ValueError("volatility level must be positive")
    growth = b * b * horizon / (2.0 * a)
    if utility.kind == mkt.EXPONENTIAL:
        return -math.exp(-utility.beta * x - growth)
    if not x > 0.0:
        raise ValueError("power/log utility needs positive wealth")
    if utility.kind == mkt.POWER:
        g = utility.gamma
        return -math.exp(-g / (1.0 + g) * growth) * x ** (-g) / g
    return math.log(x) + growth
