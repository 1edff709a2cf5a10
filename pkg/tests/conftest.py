"""Shared fixtures: the quadratic-payoff market and scenario paths."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

import uvolmax as uv

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def quadratic_payoff_market(n_payoff: int = 3201) -> uv.MarketSpec:
    """Exponential agent with terminal payoff -B_T^2, rising drift, wide band."""
    xs = np.linspace(-8.0, 8.0, n_payoff)
    return uv.MarketSpec(
        horizon=1.0,
        band=uv.VolatilityBand(0.3, 0.9),
        drift=uv.DriftCurve.affine(0.2, 0.8),
        constraint=uv.ConstraintSet.full_space(),
        utility=uv.UtilitySpec.exponential(0.5),
        liability=uv.LiabilitySpec.markov_payoff(xs, -xs * xs),
    )


@pytest.fixture(scope="session")
def quadratic_market() -> uv.MarketSpec:
    return quadratic_payoff_market()


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return SCENARIO_DIR
