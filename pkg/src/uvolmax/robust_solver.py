"""Robust (worst-case) values, volatility paths, strategies, and prices.

The robust value is the supremum over admissible volatility models of the
per-measure value.  Three modes compute it:

* pointwise closed form: for zero or deterministic liability the control
  vanishes and the supremum reduces to minimizing the driver F(t, 0, a)
  over the band separately at each time;
* path search: coordinate ascent over piecewise-constant volatility paths
  with the per-measure backward solve as the inner objective;
* robust PDE: dynamic programming in canonical-process coordinates,
  u_t + sup_a [ (1/2) a u_xx - F(t, u_x, a) ] = 0, with a scan over a
  discretized volatility grid.

A separate wealth-space solver handles the sup-inf Merton equation for
power utility on a log-wealth grid with a monotone explicit scheme.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import market as mkt
from .generators import (strategy_exponential, strategy_log, strategy_power)
from .market import MarketSpec
from .measure_eval import (PdeSolution, UnsupportedLiabilityError, VolatilityPath,
                           generator_at, integrate_generator_at_zero,
                           merton_value_constant_vol, y0_deterministic,
                           y0_markovian, y0_markovian_value,
                           _central_gradient, _simpson_nodes, QUADRATURE_PANELS)
from .pde_kernels import (MONOTONE_EXPLICIT, ControlGrid, PdeGridSpec,
                          SolverFailureError, semi_implicit_step, space_grid,
                          step_monotone)

MODE_POINTWISE = "pointwise_closed_form"
MODE_PATH_SEARCH = "path_search"
MODE_ROBUST_PDE = "robust_pde"

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class SampledField:
    """A scalar field sampled on a (t, x) grid."""

    label: str
    t: np.ndarray
    x: np.ndarray
    values: np.ndarray

    def to_dict(self) -> dict:
        return {"label": self.label, "t": self.t.tolist(), "x": self.x.tolist(),
                "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class RobustReport:
    """Solver output: robust value, worst-case volatility, strategy field."""

    y0: float
    value: float
    initial_wealth: float
    utility: str
    mode: str
    worst_path: VolatilityPath | None = None
    worst_field: SampledField | None = None
    strategy_field: SampledField | None = None
    diagnostics: dict = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        out = {
            "y0": self.y0,
            "value": self.value,
            "initial_wealth": self.initial_wealth,
            "utility": self.utility,
            "mode": self.mode,
            "diagnostics": self.diagnostics,
            "warnings": list(self.warnings),
        }
        if self.worst_path is not None:
            out["worst_path"] = self.worst_path.to_config()
        if self.worst_field is not None:
            out["worst_field"] = self.worst_field.to_dict()
        if self.strategy_field is not None:
            out["strategy_field"] = self.strategy_field.to_dict()
        return out


@dataclass(frozen=True)
class PathSearchSpec:
    """Coordinate-ascent settings for the piecewise-constant path search.

    The inner objective is the per-measure backward solve on a coarse
    evaluation grid; the winning path is re-valued once on the full grid.
    Multistart runs the ascent from both constant band endpoints and from
    the pointwise heuristic (per-interval minimizer of F(t, 0, a)).
    """

    n_intervals: int = 32
    max_sweeps: int = 8
    rel_tol: float = 1e-8
    coord_tol: float = 1e-3
    multistart: bool = True
    eval_n_time: int = 240
    eval_n_space: int = 64

    @classmethod
    def from_config(cls, cfg: dict) -> "PathSearchSpec":
        return cls(
            n_intervals=int(cfg.get("n_intervals", 32)),
            max_sweeps=int(cfg.get("max_sweeps", 8)),
            rel_tol=float(cfg.get("rel_tol", 1e-8)),
            coord_tol=float(cfg.get("coord_tol", 1e-3)),
            multistart=bool(cfg.get("multistart", True)),
            eval_n_time=int(cfg.get("eval_n_time", 240)),
            eval_n_space=int(cfg.get("eval_n_space", 64)),
        )


def worker_count(n_tasks: int) -> int:
    """Thread cap from UVOLMAX_THREADS (0 or unset means auto)."""
    raw = os.environ.get("UVOLMAX_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap <= 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_tasks))


def assemble_value(utility: mkt.UtilitySpec, x: float, y0: float) -> float:
    """Robust value at initial wealth x from the backward value y0.

    Exponential: -exp(-beta (x - y0)); power: -(1/gamma) x^-gamma exp(y0);
    log: log(x) - y0.
    """
    if utility.kind == mkt.EXPONENTIAL:
        return -math.exp(-utility.beta * (x - y0))
    if not x > 0.0:
        raise ValueError("power/log utility needs positive initial wealth")
    if utility.kind == mkt.POWER:
        g = utility.gamma
        return -(x ** (-g)) / g * math.exp(y0)
    return math.log(x) - y0


def pointwise_band_minimum(market: MarketSpec, t_nodes) -> tuple[np.ndarray, np.ndarray]:
    """Minimize a -> F(t, 0, a) over the band at each node of ``t_nodes``.

    Dense pre-scan brackets the minimum, a golden-section pass refines it,
    and the band endpoints are preferred on ties so that closed-form
    endpoint optima are returned exactly.  Returns (min values, argmins).
    """
    t = np.atleast_1d(np.asarray(t_nodes, dtype=float))
    a_lo, a_hi = market.band.a_lo, market.band.a_hi
    scan = np.linspace(a_lo, a_hi, 129)
    table = np.stack([np.broadcast_to(np.asarray(
        generator_at(market, t, 0.0, a), dtype=float), t.shape) for a in scan], axis=1)
    j = table.argmin(axis=1)

    lo = scan[np.maximum(j - 1, 0)]
    hi = scan[np.minimum(j + 1, scan.size - 1)]
    for _ in range(60):
        gap = _GOLDEN * (hi - lo)
        x1 = hi - gap
        x2 = lo + gap
        f1 = np.asarray(generator_at(market, t, 0.0, x1), dtype=float)
        f2 = np.asarray(generator_at(market, t, 0.0, x2), dtype=float)
        left = f1 < f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
    interior = 0.5 * (lo + hi)

    # strict-improvement order: endpoints, then scan best, then refined point
    cand_a = [np.full_like(t, a_lo), np.full_like(t, a_hi), scan[j], interior]
    cand_f = [table[:, 0], table[:, -1], table[np.arange(t.size), j],
              np.asarray(generator_at(market, t, 0.0, interior), dtype=float)]
    best_f = cand_f[0].copy()
    best_a = cand_a[0].copy()
    for fa, aa in zip(cand_f[1:], cand_a[1:]):
        better = fa < best_f
        best_f = np.where(better, fa, best_f)
        best_a = np.where(better, aa, best_a)
    return best_f, best_a


def _strategy_at_zero_control(market: MarketSpec, t, a):
    u = market.utility
    if u.kind == mkt.EXPONENTIAL:
        return strategy_exponential(0.0, a, t, u.beta, market.constraint, market.drift)
    if u.kind == mkt.POWER:
        return strategy_power(0.0, a, t, u.gamma, market.constraint, market.drift)
    return np.asarray([strategy_log(ai, ti, market.constraint, market.drift)
                       for ti, ai in zip(np.atleast_1d(t), np.atleast_1d(a))])


def _strategy_label(utility: mkt.UtilitySpec) -> str:
    return "pi_star" if utility.kind == mkt.EXPONENTIAL else "rho_star"


def robust_value_deterministic(market: MarketSpec, x: float = 1.0) -> RobustReport:
    """Robust value for zero or deterministic liability.

    With the control identically zero the supremum over measures reduces to
    the pointwise-in-time minimization of F(t, 0, a) over the band:
    y0 = xi - integral of min_a F(t, 0, a) dt.  The worst path collects the
    per-interval argmins on the quadrature grid.
    """
    if market.liability.kind == mkt.MARKOV:
        raise UnsupportedLiabilityError(
            "deterministic mode needs zero or deterministic liability; "
            "use the path search or the robust PDE")
    xi = market.liability.cash_value if market.utility.kind == mkt.EXPONENTIAL else 0.0
    horizon = market.horizon

    if market.drift.kind == mkt.CONSTANT:
        fmin, amin = pointwise_band_minimum(market, np.array([0.0]))
        integral = float(fmin[0]) * horizon
        path_grid = np.array([0.0, horizon])
        path_vals = np.array([float(amin[0])])
        n_nodes = 1
    else:
        cuts = np.unique(np.concatenate([[0.0, horizon],
                                         market.drift.breakpoints(horizon)]))
        max_step = horizon / QUADRATURE_PANELS
        integral = 0.0
        piece_bounds = [0.0]
        piece_vals: list[float] = []
        n_nodes = 0
        for t0, t1 in zip(cuts[:-1], cuts[1:]):
            nodes, w = _simpson_nodes(t0, t1, max_step)
            fmin, _ = pointwise_band_minimum(market, nodes)
            integral += float(np.dot(w, fmin))
            n_nodes += nodes.size
            mids = 0.5 * (nodes[:-1] + nodes[1:])
            _, amid = pointwise_band_minimum(market, mids)
            piece_bounds.extend(nodes[1:].tolist())
            piece_vals.extend(amid.tolist())
        path_grid = np.asarray(piece_bounds)
        path_vals = np.asarray(piece_vals)

    y0 = xi - integral
    worst = VolatilityPath(path_grid, path_vals)
    mid_t = 0.5 * (path_grid[:-1] + path_grid[1:])
    strat = np.asarray(_strategy_at_zero_control(market, mid_t, path_vals),
                       dtype=float).reshape(-1, 1)
    strategy = SampledField(_strategy_label(market.utility), mid_t,
                            np.array([0.0]), strat)
    return RobustReport(
        y0=y0,
        value=assemble_value(market.utility, x, y0),
        initial_wealth=x,
        utility=market.utility.kind,
        mode=MODE_POINTWISE,
        worst_path=worst,
        strategy_field=strategy,
        diagnostics={"quadrature_nodes": int(n_nodes)},
    )


def _thinned_rows(n_rows: int, limit: int = 65) -> np.ndarray:
    return np.unique(np.linspace(0, n_rows - 1, min(n_rows, limit)).astype(int))


def _exponential_strategy_field(market: MarketSpec, sol: PdeSolution,
                                a_of_row) -> SampledField:
    """Sample pi*(t, x) from the gradient field and a per-row volatility."""
    beta = market.utility.beta
    rows = _thinned_rows(sol.t.size)
    vals = np.empty((rows.size, sol.x.size))
    for k, i in enumerate(rows):
        a_row = a_of_row(i)
        vals[k] = strategy_exponential(sol.ux[i], a_row, float(sol.t[i]), beta,
                                       market.constraint, market.drift)
    return SampledField("pi_star", sol.t[rows], sol.x, vals)


def robust_value_markovian_pathsearch(market: MarketSpec,
                                      grid: PdeGridSpec | None = None,
                                      search: PathSearchSpec | None = None,
                                      x: float = 1.0) -> RobustReport:
    """Robust value over piecewise-constant volatility paths.

    Coordinate ascent on the per-interval values: each coordinate is
    optimized by a bounded scalar search with explicit endpoint checks, the
    inner objective being the per-measure backward solve on the coarse
    evaluation grid.  Multistart guards against non-unimodal coordinates.
    The best path is re-valued once on the full grid.
    """
    if market.utility.kind != mkt.EXPONENTIAL:
        raise ValueError("path search requires exponential utility")
    grid = grid or PdeGridSpec()
    search = search or PathSearchSpec()
    eval_grid = PdeGridSpec(search.eval_n_time, search.eval_n_space,
                            grid.half_width, grid.scheme, grid.theta)
    band = market.band
    breaks = np.linspace(0.0, market.horizon, search.n_intervals + 1)
    cache: dict[bytes, float] = {}

    def objective(values: np.ndarray) -> float:
        # shared across ascent threads; recomputation races are value-safe
        key = values.tobytes()
        got = cache.get(key)
        if got is None:
            got = y0_markovian_value(market, VolatilityPath(breaks, values), eval_grid)
            cache[key] = got
        return got

    def ascend(start_values: np.ndarray) -> dict:
        values = start_values.copy()
        calls = [0]

        def objective_counted(vals: np.ndarray) -> float:
            calls[0] += 1
            return objective(vals)

        best = objective_counted(values)
        sweeps = 0
        converged = False
        xatol = search.coord_tol * band.width
        for sweeps in range(1, search.max_sweeps + 1):
            sweep_start = best
            for i in range(search.n_intervals):
                def neg(a: float, i=i) -> float:
                    trial = values.copy()
                    trial[i] = a
                    return -objective_counted(trial)

                res = minimize_scalar(neg, bounds=(band.a_lo, band.a_hi),
                                      method="bounded", options={"xatol": xatol})
                for cand in (band.a_lo, band.a_hi, float(res.x)):
                    trial = values.copy()
                    trial[i] = cand
                    val = objective_counted(trial)
                    if val > best:
                        best = val
                        values = trial
            gain = best - sweep_start
            if gain <= search.rel_tol * (1.0 + abs(best)):
                converged = True
                break
        return {"values": values, "value": best, "sweeps": sweeps,
                "converged": converged, "calls": calls[0]}

    mids = 0.5 * (breaks[:-1] + breaks[1:])
    _, heuristic = pointwise_band_minimum(market, mids)
    starts = [("pointwise", heuristic.copy())]
    if search.multistart:
        starts.append(("band_low", np.full(search.n_intervals, band.a_lo)))
        starts.append(("band_high", np.full(search.n_intervals, band.a_hi)))

    if len(starts) > 1:
        with ThreadPoolExecutor(max_workers=worker_count(len(starts))) as pool:
            results = list(pool.map(lambda s: ascend(s[1]), starts))
    else:
        results = [ascend(starts[0][1])]

    best_idx = max(range(len(results)), key=lambda k: results[k]["value"])
    best = results[best_idx]
    warnings = tuple(f"start {starts[k][0]}: not converged after {r['sweeps']} sweeps"
                     for k, r in enumerate(results) if not r["converged"])

    best_path = VolatilityPath(breaks, best["values"])
    sol = y0_markovian(market, best_path, grid)
    y0 = sol.initial_value()
    strategy = _exponential_strategy_field(
        market, sol, lambda i: best_path.value_at(float(sol.t[i])))
    diagnostics = {
        "starts": [{"name": starts[k][0], "value": r["value"], "sweeps": r["sweeps"],
                    "converged": r["converged"], "calls": r["calls"]}
                   for k, r in enumerate(results)],
        "best_start": starts[best_idx][0],
        "search_value": best["value"],
        "objective_calls": sum(r["calls"] for r in results),
        "eval_grid": {"n_time": eval_grid.n_time, "n_space": eval_grid.n_space},
        "final_grid": {"n_time": grid.n_time, "n_space": grid.n_space},
    }
    return RobustReport(
        y0=y0,
        value=assemble_value(market.utility, x, y0),
        initial_wealth=x,
        utility=market.utility.kind,
        mode=MODE_PATH_SEARCH,
        worst_path=best_path,
        strategy_field=strategy,
        diagnostics=diagnostics,
        warnings=tuple(sol.warnings) + warnings,
    )


def _alpha_values(market: MarketSpec, controls: ControlGrid | None,
                  n_alpha: int = 33) -> np.ndarray:
    if controls is not None:
        return controls.alpha_values
    return np.linspace(market.band.a_lo, market.band.a_hi, n_alpha)


def _select_alpha(market: MarketSpec, t: float, grad: np.ndarray,
                  curv: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """Argmax over the volatility grid of (1/2) a curv - F(t, grad, a).

    Near-ties (within rounding of the best score) resolve to the smallest
    level so that flat regions produce a deterministic field.
    """
    scores = np.stack([0.5 * a * curv - np.asarray(
        generator_at(market, t, grad, a), dtype=float) for a in alphas])
    best = scores.max(axis=0)
    tol = 1e-12 * (1.0 + np.abs(best))
    return alphas[(scores >= best - tol).argmax(axis=0)]


def robust_value_pde(market: MarketSpec, grid: PdeGridSpec | None = None,
                     controls: ControlGrid | None = None,
                     x: float = 1.0) -> RobustReport:
    """Robust value by dynamic programming in canonical-process coordinates.

    Solves u_t + sup_a [ (1/2) a u_xx - F(t, u_x, a) ] = 0 backward with
    u(T, .) equal to the terminal payoff; y0 = u(0, 0).  The supremum is a
    scan over the volatility grid; the semi-implicit scheme freezes the
    scanned argmax per fixed-point pass, the monotone scheme evaluates the
    scanned Hamiltonian explicitly with upwinded gradients.
    """
    if market.utility.kind != mkt.EXPONENTIAL:
        raise ValueError("robust PDE mode requires exponential utility")
    grid = grid or PdeGridSpec()
    alphas = _alpha_values(market, controls)
    horizon = market.horizon
    half_width = grid.resolve_half_width(market.band.a_hi, horizon)
    xg = space_grid(half_width, grid.n_space)
    dx = xg[1] - xg[0]
    dt = horizon / grid.n_time
    beta = market.utility.beta

    u = np.asarray(market.liability.terminal_payoff(xg), dtype=float)
    rows = [u.copy()]
    alpha_rows = [_select_alpha(market, horizon, _central_gradient(u, dx),
                                _second_difference(u, dx), alphas)]

    if grid.scheme == MONOTONE_EXPLICIT:
        drift_max = market.drift.max_abs(horizon)
        grid.require_monotone_stable(horizon, market.band, drift_max, half_width)

    max_iters_seen = 0
    for n in range(grid.n_time):
        t_hi = horizon - n * dt
        t_new = t_hi - dt
        if grid.scheme == MONOTONE_EXPLICIT:
            # flat-tail boundary transport under the least favorable level
            fmin = min(float(generator_at(market, t_hi, 0.0, a)) for a in alphas)
            u = step_monotone(u, t_hi, dt, dx, xg,
                              lambda t, xi, dm, dp, d2:
                              _robust_upwind_hamiltonian(market, t, dm, dp, d2, alphas),
                              end_values=(u[0] - dt * fmin, u[-1] - dt * fmin))
            grad = _central_gradient(u, dx)
            curv = _second_difference(u, dx)
            a_star = _select_alpha(market, t_new, grad, curv, alphas)
        else:
            theta_w = grid.theta
            t_eval = theta_w * t_new + (1.0 - theta_w) * t_hi
            u_old = u
            u_k = u_old
            a_star = alpha_rows[-1]
            omega = 1.0
            prev_res = math.inf
            for it in range(50):
                blend = theta_w * u_k + (1.0 - theta_w) * u_old
                grad = _central_gradient(blend, dx)
                curv = _second_difference(blend, dx)
                a_star = _select_alpha(market, t_eval, grad, curv, alphas)
                src = np.asarray(generator_at(market, t_eval, grad, a_star), dtype=float)
                u_new = semi_implicit_step(u_old, dt, dx, a_star, theta_w, src)
                if omega != 1.0:
                    u_new = omega * u_new + (1.0 - omega) * u_k
                res = float(np.max(np.abs(u_new - u_k))) / (1.0 + float(np.max(np.abs(u_new))))
                u_k = u_new
                if res <= 1e-10:
                    break
                if res > prev_res:
                    omega = max(0.25, omega * 0.5)
                prev_res = res
            else:
                raise SolverFailureError("robust PDE fixed point did not converge",
                                         {"t": t_hi, "residual": prev_res})
            max_iters_seen = max(max_iters_seen, it + 1)
            u = u_k
        rows.append(u.copy())
        alpha_rows.append(np.asarray(a_star, dtype=float))

    t_arr = horizon - dt * np.arange(grid.n_time + 1)
    t_arr = t_arr[::-1].copy()
    u_arr = np.asarray(rows[::-1])
    ux_arr = np.stack([_central_gradient(r, dx) for r in u_arr])
    a_arr = np.asarray(alpha_rows[::-1])
    sol = PdeSolution(t_arr, xg, u_arr, ux_arr)
    y0 = sol.initial_value()

    keep = _thinned_rows(t_arr.size)
    worst_field = SampledField("a_star", t_arr[keep], xg, a_arr[keep])
    strategy = _exponential_strategy_field(market, sol, lambda i: a_arr[i])
    return RobustReport(
        y0=y0,
        value=assemble_value(market.utility, x, y0),
        initial_wealth=x,
        utility=market.utility.kind,
        mode=MODE_ROBUST_PDE,
        worst_field=worst_field,
        strategy_field=strategy,
        diagnostics={
            "n_alpha": int(alphas.size),
            "grid": {"n_time": grid.n_time, "n_space": grid.n_space,
                     "half_width": half_width, "scheme": grid.scheme},
            "max_fixed_point_iters": max_iters_seen,
        },
    )


def _second_difference(u: np.ndarray, dx: float) -> np.ndarray:
    d2 = np.zeros_like(u)
    d2[1:-1] = (u[:-2] - 2.0 * u[1:-1] + u[2:]) / (dx * dx)
    return d2


def _robust_upwind_hamiltonian(market: MarketSpec, t: float, dm, dp, d2,
                               alphas: np.ndarray) -> np.ndarray:
    """sup over the volatility grid with source gradients upwinded against
    the local source slope dF/dz (monotone for drift-dominated grids)."""
    pc = 0.5 * (dm + dp)
    best = None
    for a in alphas:
        eps = 1e-7 * (1.0 + float(np.max(np.abs(pc))))
        slope = (np.asarray(generator_at(market, t, pc + eps, a))
                 - np.asarray(generator_at(market, t, pc - eps, a))) / (2.0 * eps)
        p_sel = np.where(slope <= 0.0, dp, dm)
        h = 0.5 * a * d2 - np.asarray(generator_at(market, t, p_sel, a), dtype=float)
        best = h if best is None else np.maximum(best, h)
    return best


DEFAULT_WEALTH_LOG_HALF_WIDTH = 2.5


def merton_hjb_wealth_pde(market: MarketSpec, grid: PdeGridSpec | None = None,
                          controls: ControlGrid | None = None) -> PdeSolution:
    """Robust Merton equation for power utility on a log-wealth grid.

    Solves -v_t - sup_delta inf_alpha [ x delta b v_x
    + (1/2) x^2 delta^2 alpha v_xx ] = 0 with v(T, x) = U(x).  In log-wealth
    y the generator is c w_y + (1/2) delta^2 alpha w_yy with
    c = delta b - (1/2) delta^2 alpha; the scheme is monotone explicit with
    per-control upwinding, and the step count is raised to meet the
    stability bound of the worst control in the grid.  The inner infimum
    over the volatility grid is exact: the per-delta map is piecewise linear
    in alpha with a single upwind switch, so scanning the band endpoints and
    the grid neighbors of the switch attains the grid minimum.

    Returns the value field with ``x`` the wealth nodes (exp of the
    log-wealth grid) and ``ux`` the wealth-space gradient.
    """
    if market.utility.kind != mkt.POWER:
        raise ValueError("wealth-space robust solve requires power utility")
    if market.liability.kind != mkt.ZERO:
        raise ValueError("wealth-space robust solve requires zero liability")
    grid = grid or PdeGridSpec(n_time=2000, n_space=200, half_width=DEFAULT_WEALTH_LOG_HALF_WIDTH)
    gamma = market.utility.gamma
    if controls is None:
        controls = ControlGrid.build(market.band, market.constraint,
                                     gamma=gamma,
                                     drift_max=market.drift.max_abs(market.horizon))
    deltas = controls.delta_values
    alphas = controls.alpha_values
    horizon = market.horizon
    ly = grid.half_width if grid.half_width is not None else DEFAULT_WEALTH_LOG_HALF_WIDTH
    y = space_grid(ly, grid.n_space)
    dy = y[1] - y[0]

    dmax = float(np.max(np.abs(deltas)))
    a_hi = market.band.a_hi
    b_max = market.drift.max_abs(horizon)
    diff_max = 0.5 * dmax * dmax * a_hi
    drift_max = dmax * b_max + diff_max
    n_steps = max(grid.n_time,
                  grid.monotone_steps_required(horizon, diff_max, drift_max, ly))
    dt = horizon / n_steps

    w = np.asarray(market.utility.evaluate(np.exp(y)), dtype=float)
    stride = max(1, math.ceil(n_steps / grid.n_time))
    rows = [w.copy()]
    times = [horizon]

    half_d2 = 0.5 * deltas * deltas
    b_cached = None
    cols: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]] = []
    for n in range(n_steps):
        t_hi = horizon - n * dt
        b = float(market.drift(t_hi))
        if b != b_cached:
            # Per delta the map alpha -> H is piecewise linear with a single
            # upwind switch at alpha0 = 2 b / delta, so the minimum over the
            # alpha grid is attained at a band endpoint or at the two grid
            # neighbors of the switch.  The neighbor columns are evaluated
            # only for the deltas whose switch lies inside the band.
            with np.errstate(divide="ignore", invalid="ignore"):
                alpha0 = np.where(deltas != 0.0, 2.0 * b / deltas, np.inf)
            in_win = (alpha0 > alphas[0]) & (alpha0 < alphas[-1])
            idx_win = np.where(in_win)[0]
            k = np.clip(np.searchsorted(alphas, alpha0[idx_win]) - 1,
                        0, alphas.size - 2)
            cols = []
            for rows_idx, a_col in ((None, np.full(deltas.size, alphas[0])),
                                    (None, np.full(deltas.size, alphas[-1])),
                                    (idx_win, alphas[k]),
                                    (idx_win, alphas[k + 1])):
                d_sel = deltas if rows_idx is None else deltas[idx_win]
                k_sel = half_d2 if rows_idx is None else half_d2[idx_win]
                if d_sel.size == 0:
                    continue
                c = (d_sel * b - k_sel * a_col)[:, None]
                cols.append((np.maximum(c, 0.0), np.minimum(c, 0.0),
                             (k_sel * a_col)[:, None], rows_idx))
            b_cached = b

        dp = (w[2:] - w[1:-1]) / dy
        dm = (w[1:-1] - w[:-2]) / dy
        d2 = (w[:-2] - 2.0 * w[1:-1] + w[2:]) / (dy * dy)
        h_inner = None
        for c_pos, c_neg, diff, rows_idx in cols:
            h_col = c_pos * dp + c_neg * dm + diff * d2
            if h_inner is None:
                h_inner = h_col
            elif rows_idx is None:
                np.minimum(h_inner, h_col, out=h_inner)
            else:
                h_inner[rows_idx] = np.minimum(h_inner[rows_idx], h_col)
        h_outer = h_inner.max(axis=0)

        w_new = np.empty_like(w)
        w_new[1:-1] = w[1:-1] + dt * h_outer
        w_new[0] = 2.0 * w_new[1] - w_new[2]
        w_new[-1] = 2.0 * w_new[-2] - w_new[-3]
        if not np.all(np.isfinite(w_new)):
            raise SolverFailureError("wealth-space step produced non-finite values",
                                     {"t": t_hi, "step": n})
        w = w_new
        if (n + 1) % stride == 0 or n == n_steps - 1:
            rows.append(w.copy())
            times.append(t_hi - dt)

    t_arr = np.asarray(times[::-1])
    w_arr = np.asarray(rows[::-1])
    x_nodes = np.exp(y)
    wy = np.stack([_central_gradient(r, dy) for r in w_arr])
    vx = wy / x_nodes[None, :]
    return PdeSolution(t_arr, x_nodes, w_arr, vx)


@dataclass(frozen=True)
class IndifferencePrice:
    """Price p with the two robust values behind it."""

    price: float
    y0_claim: float
    y0_zero: float
    diagnostics: dict

    def to_dict(self) -> dict:
        return {"price": self.price, "y0_claim": self.y0_claim,
                "y0_zero": self.y0_zero, "diagnostics": self.diagnostics}


def _same_market_except_liability(m1: MarketSpec, m2: MarketSpec) -> bool:
    return (m1.horizon == m2.horizon
            and m1.band == m2.band
            and m1.drift.to_config() == m2.drift.to_config()
            and m1.constraint == m2.constraint
            and m1.utility == m2.utility)


def _robust_y0(market: MarketSpec, mode: str, grid, search, controls) -> tuple[float, str]:
    # deterministic liabilities always take the exact pointwise reduction;
    # the mode selects the solver for payoff liabilities
    if market.liability.is_deterministic:
        return robust_value_deterministic(market).y0, MODE_POINTWISE
    if mode in ("auto", "path_search"):
        rep = robust_value_markovian_pathsearch(market, grid, search)
        return rep.y0, MODE_PATH_SEARCH
    if mode == "pde":
        rep = robust_value_pde(market, grid, controls)
        return rep.y0, MODE_ROBUST_PDE
    raise ValueError(f"unknown valuation mode {mode!r}")


def indifference_price(market_with_claim: MarketSpec, market_zero: MarketSpec,
                       x: float = 1.0, mode: str = "auto",
                       grid: PdeGridSpec | None = None,
                       search: PathSearchSpec | None = None,
                       controls: ControlGrid | None = None) -> IndifferencePrice:
    """Cash amount p solving V_zero(x) = V_claim(x + p).

    Under exponential utility the value is -exp(-beta (x - y0)), so
    p = y0_claim - y0_zero independently of x.
    """
    if market_with_claim.utility.kind != mkt.EXPONENTIAL:
        raise ValueError("indifference pricing requires exponential utility")
    if not _same_market_except_liability(market_with_claim, market_zero):
        raise ValueError("markets must agree except for the liability")
    y0_claim, mode_claim = _robust_y0(market_with_claim, mode, grid, search, controls)
    y0_zero, mode_zero = _robust_y0(market_zero, mode, grid, search, controls)
    return IndifferencePrice(
        price=y0_claim - y0_zero,
        y0_claim=y0_claim,
        y0_zero=y0_zero,
        diagnostics={"mode_claim": mode_claim, "mode_zero": mode_zero,
                     "initial_wealth": x},
    )


def minmax_gap(market: MarketSpec, alpha_grid=None, x: float = 1.0) -> float:
    """Absolute gap between the two orders of optimization.

    The sup-inf side is the robust value.  The inf-sup side takes the
    classical single-measure value at each volatility level of the grid and
    minimizes; for exponential utility a deterministic liability shifts
    wealth.  Requires the unconstrained set, constant drift, and a
    deterministic liability so both sides have closed forms.
    """
    if market.constraint.kind != "full":
        raise ValueError("min-max check requires the unconstrained strategy set")
    if market.drift.kind != mkt.CONSTANT:
        raise ValueError("min-max check requires constant drift")
    if not market.liability.is_deterministic:
        raise ValueError("min-max check requires a deterministic liability")
    if alpha_grid is None:
        alpha_grid = np.linspace(market.band.a_lo, market.band.a_hi, 33)
    robust = robust_value_deterministic(market, x).value

    b = market.drift.b0
    if market.utility.kind == mkt.EXPONENTIAL:
        x_eff = x - market.liability.cash_value
    else:
        x_eff = x
    classical = min(merton_value_constant_vol(market.utility, x_eff, b, float(a),
                                              market.horizon)
                    for a in np.asarray(alpha_grid, dtype=float))
    return abs(classical - robust)
