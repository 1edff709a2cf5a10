import math

import numpy as np
import pytest

import uvolmax as uv
from uvolmax.market import DriftCurve, theta


def test_theta_examples():
    assert theta(0.3, 1.0, DriftCurve.constant(0.2)) == 0.2
    assert theta(0.5, 0.04, DriftCurve.constant(0.2)) == pytest.approx(1.0, abs=1e-15)
    assert theta(0.1, 0.5, DriftCurve.constant(0.0)) == 0.0


def test_theta_rejects_nonpositive_level():
    with pytest.raises(ValueError):
        theta(0.0, 0.0, DriftCurve.constant(0.1))
    with pytest.raises(ValueError):
        theta(0.0, -1.0, DriftCurve.constant(0.1))


def test_theta_continuous_in_time():
    curves = [
        DriftCurve.constant(0.3),
        DriftCurve.affine(0.1, -0.4),
        DriftCurve.sampled([0.0, 0.3, 0.7, 1.0], [0.0, 0.5, 0.2, 0.4]),
    ]
    ts = np.linspace(0.0, 1.0, 2001)
    for curve in curves:
        vals = theta(ts, 0.16, curve)
        jumps = np.abs(np.diff(vals))
        assert np.max(jumps) < 1e-2  # no discontinuities on a fine probe


def test_theta_bound_over_band():
    curve = DriftCurve.sampled([0.0, 0.5, 1.0], [0.2, -0.6, 0.1])
    m = uv.MarketSpec(1.0, uv.VolatilityBand(0.04, 0.25), curve,
                      uv.ConstraintSet.full_space(), uv.UtilitySpec.log())
    bound = m.theta_bound()
    ts = np.linspace(0.0, 1.0, 301)
    for a in np.linspace(0.04, 0.25, 7):
        assert np.all(np.abs(theta(ts, a, curve)) <= bound + 1e-12)


def test_drift_evaluation_and_max_abs():
    aff = DriftCurve.affine(0.1, 0.5)
    assert aff(0.0) == 0.1 and aff(1.0) == pytest.approx(0.6)
    assert aff.max_abs(1.0) == pytest.approx(0.6)
    samp = DriftCurve.sampled([0.0, 0.25, 1.0], [1.0, -2.0, 0.0])
    assert samp(0.125) == pytest.approx(-0.5)
    assert samp.max_abs(1.0) == 2.0
    assert samp.max_abs(0.1) == pytest.approx(1.0)  # restricted to [0, 0.1]


def test_band_validation():
    with pytest.raises(ValueError):
        uv.VolatilityBand(0.0, 1.0)
    with pytest.raises(ValueError):
        uv.VolatilityBand(0.2, 0.1)
    band = uv.VolatilityBand(0.04, 0.09)
    assert band.contains([0.04, 0.07, 0.09])
    assert not band.contains(0.1)


def test_utility_validation_and_evaluation():
    with pytest.raises(ValueError):
        uv.UtilitySpec.exponential(0.0)
    with pytest.raises(ValueError):
        uv.UtilitySpec.power(-1.0)
    assert uv.UtilitySpec.exponential(2.0).evaluate(0.0) == -1.0
    assert uv.UtilitySpec.power(1.0).evaluate(2.0) == -0.5
    assert uv.UtilitySpec.log().evaluate(1.0) == 0.0
    with pytest.raises(ValueError):
        uv.UtilitySpec.log().evaluate(-1.0)


def test_markov_payoff_interpolation_held_flat_outside():
    liab = uv.LiabilitySpec.markov_payoff([-1.0, 0.0, 1.0], [2.0, 0.0, 2.0])
    assert liab.terminal_payoff(0.5) == 1.0
    assert liab.terminal_payoff(9.0) == 2.0  # bounded continuation
    assert liab.terminal_payoff(-9.0) == 2.0
    with pytest.raises(ValueError):
        uv.LiabilitySpec.markov_payoff([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        uv.LiabilitySpec.markov_payoff([0.0, 1.0], [1.0, math.inf])


def test_market_validation():
    band = uv.VolatilityBand(0.04, 0.09)
    drift = DriftCurve.constant(0.2)
    full = uv.ConstraintSet.full_space()
    with pytest.raises(ValueError):
        uv.MarketSpec(0.0, band, drift, full, uv.UtilitySpec.log())
    with pytest.raises(ValueError):
        uv.MarketSpec(1.0, band, drift, full, uv.UtilitySpec.power(1.0),
                      uv.LiabilitySpec.deterministic(0.3))
    short = DriftCurve.sampled([0.0, 0.5], [0.1, 0.1])
    with pytest.raises(ValueError):
        uv.MarketSpec(1.0, band, short, full, uv.UtilitySpec.log())


def test_replace_liability_keeps_market():
    band = uv.VolatilityBand(0.04, 0.09)
    m = uv.MarketSpec(1.0, band, DriftCurve.constant(0.2),
                      uv.ConstraintSet.full_space(),
                      uv.UtilitySpec.exponential(1.0),
                      uv.LiabilitySpec.deterministic(0.5))
    z = m.replace_liability(uv.LiabilitySpec.zero())
    assert z.liability.kind == "zero"
    assert z.band == m.band and z.drift is m.drift
