"""Robust utility maximization under volatility uncertainty.

Worst-case values, worst-case volatility paths, optimal strategy fields,
and indifference prices for exponential, power, and log utilities when the
market volatility is only known to lie in a band.
"""

from .constraints import ConstraintSet, distance, min_norm, project, scale_set
from .generators import (excess_drift_exponential, gen_exponential, gen_log,
                         gen_power, strategy_exponential, strategy_log,
                         strategy_power)
from .market import (DriftCurve, LiabilitySpec, MarketSpec, UtilitySpec,
                     VolatilityBand, theta)
from .measure_eval import (PdeSolution, UnsupportedLiabilityError,
                           VolatilityPath, merton_value_constant_vol,
                           y0_deterministic, y0_markovian, y0_markovian_value)
from .pde_kernels import (ControlGrid, GridStabilityError, PdeGridSpec,
                          SolverFailureError, step_monotone,
                          sup_inf_hamiltonian)
from .robust_solver import (IndifferencePrice, PathSearchSpec, RobustReport,
                            SampledField, assemble_value, indifference_price,
                            merton_hjb_wealth_pde, minmax_gap,
                            robust_value_deterministic,
                            robust_value_markovian_pathsearch,
                            robust_value_pde)

__version__ = "0.1.0"

__all__ = [
    "ConstraintSet", "distance", "project", "scale_set", "min_norm",
    "VolatilityBand", "DriftCurve", "UtilitySpec", "LiabilitySpec",
    "MarketSpec", "theta",
    "gen_exponential", "gen_power", "gen_log",
    "strategy_exponential", "strategy_power", "strategy_log",
    "excess_drift_exponential",
    "VolatilityPath", "PdeSolution", "UnsupportedLiabilityError",
    "y0_deterministic", "y0_markovian", "y0_markovian_value",
    "merton_value_constant_vol",
    "PdeGridSpec", "ControlGrid", "step_monotone", "sup_inf_hamiltonian",
    "SolverFailureError", "GridStabilityError",
    "RobustReport", "SampledField", "PathSearchSpec", "assemble_value",
    "robust_value_deterministic", "robust_value_markovian_pathsearch",
    "robust_value_pde", "merton_hjb_wealth_pde",
    "indifference_price", "IndifferencePrice", "minmax_gap",
]
