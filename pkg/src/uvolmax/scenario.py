"""Scenario configs: JSON parsing, validation, and command execution.

A scenario file bundles a market specification with solver settings and an
initial wealth.  Commands produce a ``<stem>.report.json`` next to the
config (or under ``--out-dir``) plus command-specific CSV tables.  Reports
are deterministic: keys are sorted, floats round-trip exactly, and nothing
time- or host-dependent is written.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import market as mkt
from .constraints import ConstraintSet
from .market import (DriftCurve, LiabilitySpec, MarketSpec, UtilitySpec,
                     VolatilityBand)
from .measure_eval import (VolatilityPath, generator_at, y0_deterministic,
                           y0_markovian, y0_markovian_value)
from .pde_kernels import ControlGrid, PdeGridSpec
from .robust_solver import (IndifferencePrice, PathSearchSpec, RobustReport,
                            indifference_price, merton_hjb_wealth_pde,
                            minmax_gap, robust_value_deterministic,
                            robust_value_markovian_pathsearch,
                            robust_value_pde)

COMMANDS = ("value", "worst-vol", "strategy", "indiff", "minmax-check",
            "convergence", "gen-eval", "per-measure")


class ConfigError(ValueError):
    """Scenario file failed to parse or validate."""


@dataclass(frozen=True, eq=False)
class Scenario:
    """Validated scenario: market plus solver settings."""

    name: str
    reference_case: str
    market: MarketSpec
    initial_wealth: float
    mode: str
    solver: PdeGridSpec
    search: PathSearchSpec
    controls_cfg: dict
    outputs: tuple[str, ...]
    convergence_scales: tuple[int, ...]
    path_cfg: dict | None

    def control_grid(self, scale: int = 1) -> ControlGrid:
        cfg = self.controls_cfg
        n_delta = int(cfg.get("n_delta", 161))
        if scale > 1:
            n_delta = (n_delta - 1) * scale + 1
        gamma = (self.market.utility.gamma
                 if self.market.utility.kind == mkt.POWER else 1.0)
        return ControlGrid.build(
            self.market.band, self.market.constraint,
            n_alpha=int(cfg.get("n_alpha", 33)),
            n_delta=n_delta,
            delta_max=cfg.get("delta_max"),
            gamma=gamma,
            drift_max=self.market.drift.max_abs(self.market.horizon),
        )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    try:
        market_cfg = cfg["market"]
        market = MarketSpec(
            horizon=float(market_cfg["horizon"]),
            band=VolatilityBand(float(market_cfg["band"]["a_lo"]),
                                float(market_cfg["band"]["a_hi"])),
            drift=DriftCurve.from_config(market_cfg["drift"]),
            constraint=ConstraintSet.from_config(
                market_cfg.get("constraint", {"type": "full"})),
            utility=UtilitySpec.from_config(market_cfg["utility"]),
            liability=LiabilitySpec.from_config(
                market_cfg.get("liability", {"type": "zero"})),
        )
        mode = cfg.get("mode", "auto")
        if mode not in ("auto", "deterministic", "path_search", "pde"):
            raise ValueError(f"unknown mode {mode!r}")
        x = float(cfg.get("initial_wealth", 1.0))
        if market.utility.kind in (mkt.POWER, mkt.LOG) and not x > 0.0:
            raise ValueError("initial wealth must be positive for power/log utility")
        scales = tuple(int(s) for s in cfg.get("convergence_scales", (1, 2)))
        return Scenario(
            name=str(cfg.get("name", path.stem)),
            reference_case=str(cfg.get("reference_case", "")),
            market=market,
            initial_wealth=x,
            mode=mode,
            solver=PdeGridSpec.from_config(cfg.get("solver", {})),
            search=PathSearchSpec.from_config(cfg.get("search", {})),
            controls_cfg=dict(cfg.get("controls", {})),
            outputs=tuple(cfg.get("outputs",
                                  ("worst_path", "strategy_field", "diagnostics"))),
            convergence_scales=scales,
            path_cfg=cfg.get("path"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        key = f" (missing key {e})" if isinstance(e, KeyError) else ""
        raise ConfigError(f"{path}: {e}{key}") from e


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


def _write_report(payload: dict, stem: Path, quiet: bool) -> Path:
    out = stem.with_suffix(".report.json")
    out.write_text(json.dumps(payload, indent=2, sort_keys=True,
                              default=_json_default) + "\n")
    if not quiet:
        print(f"wrote {out}")
    return out


def _write_csv(stem: Path, section: str, header: str, rows, quiet: bool) -> Path:
    out = stem.with_suffix(f".{section}.csv")
    with out.open("w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    if not quiet:
        print(f"wrote {out}")
    return out


def _scaled_grid(scenario: Scenario, grid_scale: int) -> PdeGridSpec:
    return scenario.solver.with_scale(grid_scale) if grid_scale > 1 else scenario.solver


def _value_report(scenario: Scenario, grid_scale: int) -> RobustReport:
    market = scenario.market
    x = scenario.initial_wealth
    grid = _scaled_grid(scenario, grid_scale)
    mode = scenario.mode
    if market.liability.kind != mkt.MARKOV and mode in ("auto", "deterministic"):
        return robust_value_deterministic(market, x)
    if mode == "pde":
        controls = scenario.control_grid(grid_scale) if scenario.controls_cfg else None
        return robust_value_pde(market, grid, controls, x)
    return robust_value_markovian_pathsearch(market, grid, scenario.search, x)


def _report_envelope(scenario: Scenario, command: str, grid_scale: int) -> dict:
    return {
        "scenario": scenario.name,
        "reference_case": scenario.reference_case,
        "command": command,
        "grid_scale": grid_scale,
        "version": __version__,
    }


def _strip_report(report: RobustReport, outputs: tuple[str, ...]) -> dict:
    full = report.to_dict()
    for key in ("worst_path", "worst_field", "strategy_field", "diagnostics"):
        if key not in outputs and key in full:
            del full[key]
    return full


def _method_label(report: RobustReport) -> str:
    return f"{report.utility}-value-assembly/{report.mode}"


def _worst_vol_rows(report: RobustReport):
    if report.worst_path is not None:
        p = report.worst_path
        mids = 0.5 * (p.grid[:-1] + p.grid[1:])
        return [(float(t), float(a)) for t, a in zip(mids, p.values)]
    field = report.worst_field
    j0 = int(np.argmin(np.abs(field.x)))
    return [(float(t), float(a)) for t, a in zip(field.t, field.values[:, j0])]


def _strategy_rows(report: RobustReport):
    f = report.strategy_field
    rows = []
    for i, t in enumerate(f.t):
        for j, xj in enumerate(f.x):
            rows.append((float(t), float(xj), float(f.values[i, j])))
    return rows


def run_scenario(config_path: str | Path, command: str, out_dir: str | None = None,
                 grid_scale: int = 1, quiet: bool = False,
                 extra: dict | None = None) -> int:
    """Execute one command for one scenario file; returns the exit code."""
    scenario = load_scenario(config_path)
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    stem = Path(out_dir or Path(config_path).parent) / Path(config_path).stem
    stem.parent.mkdir(parents=True, exist_ok=True)
    extra = extra or {}
    payload = _report_envelope(scenario, command, grid_scale)

    if command == "value":
        report = _value_report(scenario, grid_scale)
        payload["method"] = _method_label(report)
        payload["result"] = _strip_report(report, scenario.outputs)
        _write_report(payload, stem, quiet)
        return 0

    if command == "worst-vol":
        report = _value_report(scenario, grid_scale)
        payload["method"] = _method_label(report)
        payload["result"] = {"y0": report.y0, "value": report.value}
        _write_csv(stem, "worst_vol", "t,a_star", _worst_vol_rows(report), quiet)
        _write_report(payload, stem, quiet)
        return 0

    if command == "strategy":
        report = _value_report(scenario, grid_scale)
        payload["method"] = _method_label(report)
        payload["result"] = {"y0": report.y0, "value": report.value,
                             "strategy_label": report.strategy_field.label}
        _write_csv(stem, "strategy",
                   f"t,x,{report.strategy_field.label}",
                   _strategy_rows(report), quiet)
        _write_report(payload, stem, quiet)
        return 0

    if command == "indiff":
        market_zero = scenario.market.replace_liability(LiabilitySpec.zero())
        result = indifference_price(
            scenario.market, market_zero, scenario.initial_wealth,
            mode=scenario.mode if scenario.mode != "deterministic" else "auto",
            grid=_scaled_grid(scenario, grid_scale), search=scenario.search,
            controls=scenario.control_grid(grid_scale) if scenario.controls_cfg else None)
        payload["method"] = "indifference-price/exponential-cash-shift"
        payload["result"] = result.to_dict()
        _write_report(payload, stem, quiet)
        return 0

    if command == "minmax-check":
        gap = minmax_gap(scenario.market, x=scenario.initial_wealth)
        payload["method"] = "minmax-gap/closed-forms"
        payload["result"] = {"gap": gap}
        _write_report(payload, stem, quiet)
        return 0

    if command == "convergence":
        rows, values = _convergence_table(scenario)
        payload["method"] = "grid-refinement-table"
        payload["result"] = {"scales": list(scenario.convergence_scales),
                             "values": values}
        _write_csv(stem, "convergence", "scale,n_time,n_space,value,diff_to_finest",
                   rows, quiet)
        _write_report(payload, stem, quiet)
        return 0

    if command == "gen-eval":
        rows = _gen_eval_rows(scenario, extra)
        _write_csv(stem, "gen_eval", "z,a,F", rows, quiet)
        payload["method"] = "driver-grid-evaluation"
        payload["result"] = {"rows": len(rows)}
        _write_report(payload, stem, quiet)
        return 0

    # per-measure
    path = _per_measure_path(scenario, extra)
    payload["method"] = "per-measure-valuation"
    if scenario.market.liability.kind == mkt.MARKOV:
        sol = y0_markovian(scenario.market, path, _scaled_grid(scenario, grid_scale))
        with stem.with_suffix(".per_measure.csv").open("w") as fh:
            sol.write_csv(fh)
        if not quiet:
            print(f"wrote {stem.with_suffix('.per_measure.csv')}")
        payload["result"] = {"y0": sol.initial_value(),
                             "path": path.to_config(),
                             "warnings": list(sol.warnings)}
    else:
        payload["result"] = {"y0": y0_deterministic(scenario.market, path),
                             "path": path.to_config()}
    _write_report(payload, stem, quiet)
    return 0


def _convergence_table(scenario: Scenario):
    market = scenario.market
    values = []
    dims = []
    for scale in scenario.convergence_scales:
        grid = scenario.solver.with_scale(scale)
        if market.utility.kind == mkt.POWER:
            sol = merton_hjb_wealth_pde(market, grid, scenario.control_grid(scale))
            values.append(sol.value_at_time0(scenario.initial_wealth))
        elif market.liability.kind == mkt.MARKOV:
            mids = np.linspace(0.0, market.horizon, scenario.search.n_intervals + 1)
            from .robust_solver import pointwise_band_minimum
            _, heur = pointwise_band_minimum(
                market, 0.5 * (mids[:-1] + mids[1:]))
            path = VolatilityPath(mids, heur)
            values.append(y0_markovian_value(market, path, grid))
        else:
            values.append(robust_value_deterministic(market,
                                                     scenario.initial_wealth).y0)
        dims.append((grid.n_time, grid.n_space))
    finest = values[-1]
    rows = [(float(s), float(nt), float(ns), v, v - finest)
            for s, (nt, ns), v in zip(scenario.convergence_scales, dims, values)]
    return rows, values


def _gen_eval_rows(scenario: Scenario, extra: dict):
    market = scenario.market
    t = float(extra.get("t", 0.0))
    n_z = int(extra.get("n_z", 21))
    n_a = int(extra.get("n_a", 9))
    z_max = float(extra.get("z_max", 2.0))
    zs = np.linspace(-z_max, z_max, n_z)
    alphas = np.linspace(market.band.a_lo, market.band.a_hi, n_a)
    rows = []
    for a in alphas:
        f = np.asarray(generator_at(market, t, zs, float(a)), dtype=float)
        f = np.broadcast_to(f, zs.shape)
        for z, v in zip(zs, f):
            rows.append((float(z), float(a), float(v)))
    return rows


def _per_measure_path(scenario: Scenario, extra: dict) -> VolatilityPath:
    constant_a = extra.get("constant_a")
    if constant_a is not None:
        return VolatilityPath.constant(float(constant_a), scenario.market.horizon)
    if scenario.path_cfg is not None:
        return VolatilityPath.from_config(scenario.path_cfg)
    return VolatilityPath.constant(scenario.market.band.a_hi,
                                   scenario.market.horizon)
