import math

import numpy as np
import pytest

import uvolmax as uv
from uvolmax.measure_eval import VolatilityPath, y0_markovian
from uvolmax.pde_kernels import ControlGrid, PdeGridSpec
from uvolmax.robust_solver import (PathSearchSpec, assemble_value,
                                   indifference_price, merton_hjb_wealth_pde,
                                   minmax_gap, pointwise_band_minimum,
                                   robust_value_deterministic,
                                   robust_value_markovian_pathsearch,
                                   robust_value_pde, worker_count)

from conftest import quadratic_payoff_market

FULL = uv.ConstraintSet.full_space()


def _exp_market(b=0.2, beta=1.0, band=(0.04, 0.09), T=1.0, xi=None,
                constraint=FULL, drift=None):
    liab = uv.LiabilitySpec.zero() if xi is None else uv.LiabilitySpec.deterministic(xi)
    return uv.MarketSpec(T, uv.VolatilityBand(*band),
                         drift or uv.DriftCurve.constant(b), constraint,
                         uv.UtilitySpec.exponential(beta), liab)


def test_degenerate_exponential_value():
    rep = robust_value_deterministic(_exp_market())
    assert rep.y0 == pytest.approx(-0.04 / 0.18, abs=1e-13)
    assert np.all(rep.worst_path.values == 0.09)
    assert rep.value == pytest.approx(-math.exp(-(1.0 + 0.04 / 0.18)), abs=1e-13)
    assert rep.mode == "pointwise_closed_form"


def test_zero_drift_ties_resolve_to_band_floor():
    rep = robust_value_deterministic(_exp_market(b=0.0, xi=0.3))
    assert rep.y0 == pytest.approx(0.3, abs=1e-15)
    assert np.all(rep.worst_path.values == 0.04)


def test_cash_shift_moves_value_exactly():
    base = robust_value_deterministic(_exp_market(xi=0.0)).y0
    for c in (-0.7, 0.25, 1.3):
        shifted = robust_value_deterministic(_exp_market(xi=c)).y0
        assert shifted - base == pytest.approx(c, abs=1e-14)


def test_power_value_and_scale_property():
    m = uv.MarketSpec(1.0, uv.VolatilityBand(0.04, 0.09),
                      uv.DriftCurve.constant(0.2), FULL, uv.UtilitySpec.power(1.0))
    rep = robust_value_deterministic(m, x=1.0)
    assert rep.y0 == pytest.approx(-0.04 / (4 * 0.09), abs=1e-14)
    assert rep.value == pytest.approx(-math.exp(-0.04 / (4 * 0.09)), abs=1e-14)
    for lam in (0.5, 2.0, 7.0):
        scaled = robust_value_deterministic(m, x=lam)
        assert scaled.value == pytest.approx(lam ** (-1.0) * rep.value, rel=1e-14)


def test_log_value_unconstrained():
    m = uv.MarketSpec(1.0, uv.VolatilityBand(0.04, 0.09),
                      uv.DriftCurve.constant(0.3), FULL, uv.UtilitySpec.log())
    rep = robust_value_deterministic(m, x=2.0)
    assert rep.y0 == pytest.approx(-0.09 / 0.18, abs=1e-14)
    assert rep.value == pytest.approx(math.log(2.0) + 0.5, abs=1e-14)
    assert np.all(rep.worst_path.values == 0.09)


def test_constrained_interval_matches_dense_scan():
    # oracle: brute-force minimization of the driver over a dense band grid
    from uvolmax.measure_eval import generator_at
    box = uv.ConstraintSet.interval(0.0, 0.5)
    m = _exp_market(b=0.25, beta=2.0, constraint=box)
    rep = robust_value_deterministic(m)
    scan = np.linspace(0.04, 0.09, 200001)
    vals = np.asarray(generator_at(m, 0.0, 0.0, scan))
    assert rep.y0 == pytest.approx(-float(vals.min()), abs=1e-9)
    a_scan = float(scan[int(vals.argmin())])
    assert np.all(np.abs(rep.worst_path.values - a_scan) <= 1e-5)


def test_sampled_drift_worst_path_tracks_pointwise_minimizer():
    drift = uv.DriftCurve.sampled([0.0, 0.5, 1.0], [0.1, 0.4, 0.2])
    m = _exp_market(drift=drift, beta=1.2)
    rep = robust_value_deterministic(m)
    mids = 0.5 * (rep.worst_path.grid[:-1] + rep.worst_path.grid[1:])
    _, amin = pointwise_band_minimum(m, mids)
    assert np.allclose(rep.worst_path.values, amin, atol=1e-10)


def test_pathsearch_reproduces_deterministic_value():
    m = _exp_market(b=0.3, beta=0.8, band=(0.3, 0.9), xi=0.4,
                    drift=uv.DriftCurve.affine(0.3, 0.2))
    mk = m.replace_liability(uv.LiabilitySpec.markov_payoff([-9.0, 9.0], [0.4, 0.4]))
    det = robust_value_deterministic(m)
    search = PathSearchSpec(n_intervals=8, max_sweeps=4, eval_n_time=120,
                            eval_n_space=48, multistart=False)
    rep = robust_value_markovian_pathsearch(mk, PdeGridSpec(800, 64), search)
    assert rep.y0 == pytest.approx(det.y0, abs=1e-6)
    assert rep.mode == "path_search"


def test_robust_pde_matches_deterministic_on_cash_liability():
    m = _exp_market(b=0.3, beta=0.8, band=(0.3, 0.9), xi=0.4,
                    drift=uv.DriftCurve.affine(0.3, 0.2))
    mk = m.replace_liability(uv.LiabilitySpec.markov_payoff([-9.0, 9.0], [0.4, 0.4]))
    det = robust_value_deterministic(m)
    rep = robust_value_pde(mk, PdeGridSpec(600, 96))
    assert rep.y0 == pytest.approx(det.y0, abs=1e-5)
    assert rep.mode == "robust_pde"


def test_robust_pde_concave_payoff_floors_volatility():
    m0 = quadratic_payoff_market(n_payoff=801)
    m0 = uv.MarketSpec(1.0, m0.band, uv.DriftCurve.constant(0.0), FULL,
                       m0.utility, m0.liability)
    rep = robust_value_pde(m0, PdeGridSpec(400, 96))
    assert rep.y0 == pytest.approx(-0.3, rel=2e-3)
    assert np.all(rep.worst_field.values == m0.band.a_lo)


def test_minmax_gap_examples():
    assert minmax_gap(_exp_market()) <= 1e-12
    assert minmax_gap(_exp_market(b=0.0, xi=0.4)) == 0.0
    power_market = uv.MarketSpec(1.0, uv.VolatilityBand(0.04, 0.09),
                                 uv.DriftCurve.constant(0.2), FULL,
                                 uv.UtilitySpec.power(1.0))
    assert minmax_gap(power_market) <= 1e-12
    with pytest.raises(ValueError):
        minmax_gap(_exp_market(constraint=uv.ConstraintSet.interval(0.0, 1.0)))
    with pytest.raises(ValueError):
        minmax_gap(_exp_market(drift=uv.DriftCurve.affine(0.1, 0.1)))


def test_indifference_price_cash_and_zero():
    m0 = _exp_market(xi=None)
    for c in (0.5, -0.2, 1.7):
        mc = m0.replace_liability(uv.LiabilitySpec.deterministic(c))
        res = indifference_price(mc, m0)
        assert res.price == pytest.approx(c, abs=1e-13)
    res = indifference_price(m0, m0)
    assert res.price == 0.0


def test_indifference_rejects_mismatched_markets():
    m0 = _exp_market()
    other = _exp_market(b=0.3)
    with pytest.raises(ValueError):
        indifference_price(other, m0)
    power_market = uv.MarketSpec(1.0, uv.VolatilityBand(0.04, 0.09),
                                 uv.DriftCurve.constant(0.2), FULL,
                                 uv.UtilitySpec.power(1.0))
    with pytest.raises(ValueError):
        indifference_price(power_market, power_market)


def test_value_assembly_identity():
    for beta in (0.5, 2.0):
        util = uv.UtilitySpec.exponential(beta)
        for x, y0 in ((1.0, -0.2), (0.3, 0.7)):
            assert assemble_value(util, x, y0) == -math.exp(-beta * (x - y0))
    util = uv.UtilitySpec.power(1.5)
    assert assemble_value(util, 2.0, -0.3) == -(2.0 ** -1.5) / 1.5 * math.exp(-0.3)
    assert assemble_value(uv.UtilitySpec.log(), 2.0, -0.3) == math.log(2.0) + 0.3


def test_pathsearch_strategy_field_consistency(quadratic_market):
    search = PathSearchSpec(n_intervals=8, max_sweeps=3, eval_n_time=100,
                            eval_n_space=40, multistart=False)
    grid = PdeGridSpec(300, 80)
    rep = robust_value_markovian_pathsearch(quadratic_market, grid, search)
    sol = y0_markovian(quadratic_market, rep.worst_path, grid)
    f = rep.strategy_field
    beta = quadratic_market.utility.beta
    # the stored field is the projected strategy of the gradient field; the
    # drift-penalty identity vanishes at those nodes
    rows = np.searchsorted(sol.t, f.t)
    for k, i in enumerate(rows):
        a_row = rep.worst_path.value_at(float(sol.t[i]))
        excess = uv.excess_drift_exponential(
            f.values[k], sol.ux[i], a_row, float(sol.t[i]), beta,
            quadratic_market.constraint, quadratic_market.drift)
        assert np.max(np.abs(np.asarray(excess))) <= 1e-10


def test_pathsearch_value_below_pde_value(quadratic_market):
    search = PathSearchSpec(n_intervals=8, max_sweeps=3, eval_n_time=100,
                            eval_n_space=48, multistart=False)
    rep_ps = robust_value_markovian_pathsearch(quadratic_market,
                                               PdeGridSpec(400, 96), search)
    rep_pde = robust_value_pde(quadratic_market, PdeGridSpec(400, 96))
    assert rep_ps.y0 <= rep_pde.y0 + 5e-4


def test_wealth_pde_requires_power_zero_liability():
    with pytest.raises(ValueError):
        merton_hjb_wealth_pde(_exp_market())


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("UVOLMAX_THREADS", "1")
    assert worker_count(5) == 1
    monkeypatch.setenv("UVOLMAX_THREADS", "0")
    assert worker_count(5) >= 1
    monkeypatch.delenv("UVOLMAX_THREADS")
    assert 1 <= worker_count(5) <= 5
