"""Market specification: volatility band, drift curve, utility, liability.

The model has one bond with zero interest rate and one risky asset whose
volatility is unknown within a band: only the bounds ``a_lo <= a(t) <= a_hi``
on the quadratic-variation density are given.  The drift is a deterministic
bounded curve on the horizon.  The derived quantity ``theta(t, a) =
b(t) / sqrt(a)`` is the market price of risk under a candidate volatility
level and enters every generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintSet

EXPONENTIAL = "exponential"
POWER = "power"
LOG = "log"

CONSTANT = "constant"
AFFINE = "affine"
SAMPLED = "sampled"

ZERO = "zero"
DETERMINISTIC = "deterministic"
MARKOV = "markov"


@dataclass(frozen=True)
class VolatilityBand:
    """Bounds ``0 < a_lo <= a_hi`` on the quadratic-variation density."""

    a_lo: float
    a_hi: float

    def __post_init__(self) -> None:
        if not (0.0 < self.a_lo <= self.a_hi < float("inf")):
            raise ValueError(f"need 0 < a_lo <= a_hi, got [{self.a_lo}, {self.a_hi}]")

    @property
    def width(self) -> float:
        return self.a_hi - self.a_lo

    def clip(self, a):
        return np.clip(a, self.a_lo, self.a_hi)

    def contains(self, a, tol: float = 1e-12) -> bool:
        arr = np.asarray(a, dtype=float)
        return bool(np.all(arr >= self.a_lo - tol) and np.all(arr <= self.a_hi + tol))


@dataclass(frozen=True, eq=False)
class DriftCurve:
    """Deterministic bounded drift curve b(t), continuous on the horizon.

    Variants: constant, affine in time, or sampled on a grid with linear
    interpolation between nodes.
    """

    kind: str
    b0: float = 0.0
    slope: float = 0.0
    times: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind in (CONSTANT, AFFINE):
            if not (math.isfinite(self.b0) and math.isfinite(self.slope)):
                raise ValueError("drift coefficients must be finite")
            return
        if self.kind != SAMPLED:
            raise ValueError(f"unknown drift kind {self.kind!r}")
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("sampled drift needs matching 1-d times/values, length >= 2")
        if not np.all(np.diff(t) > 0):
            raise ValueError("sampled drift times must be strictly ascending")
        if not np.all(np.isfinite(v)):
            raise ValueError("sampled drift values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, b: float) -> "DriftCurve":
        return cls(CONSTANT, b0=float(b))

    @classmethod
    def affine(cls, b0: float, slope: float) -> "DriftCurve":
        return cls(AFFINE, b0=float(b0), slope=float(slope))

    @classmethod
    def sampled(cls, times, values) -> "DriftCurve":
        return cls(SAMPLED, times=np.asarray(times, float), values=np.asarray(values, float))

    @classmethod
    def from_config(cls, cfg: dict) -> "DriftCurve":
        kind = cfg.get("type")
        if kind == "constant":
            return cls.constant(cfg["b"])
        if kind == "affine":
            return cls.affine(cfg["b0"], cfg["slope"])
        if kind == "sampled":
            return cls.sampled(cfg["times"], cfg["values"])
        raise ValueError(f"unknown drift type {kind!r}")

    def to_config(self) -> dict:
        if self.kind == CONSTANT:
            return {"type": "constant", "b": self.b0}
        if self.kind == AFFINE:
            return {"type": "affine", "b0": self.b0, "slope": self.slope}
        return {"type": "sampled", "times": self.times.tolist(), "values": self.values.tolist()}

    def __call__(self, t):
        if self.kind == CONSTANT:
            out = np.full_like(np.asarray(t, dtype=float), self.b0)
        elif self.kind == AFFINE:
            out = self.b0 + self.slope * np.asarray(t, dtype=float)
        else:
            out = np.interp(np.asarray(t, dtype=float), self.times, self.values)
        return float(out) if out.ndim == 0 else out

    def max_abs(self, horizon: float) -> float:
        """Bound on |b(t)| over [0, horizon]; attained at nodes or endpoints."""
        if self.kind == CONSTANT:
            return abs(self.b0)
        if self.kind == AFFINE:
            return max(abs(self.b0), abs(self.b0 + self.slope * horizon))
        inside = (self.times >= 0.0) & (self.times <= horizon)
        cands = [abs(self(0.0)), abs(self(horizon))]
        if np.any(inside):
            cands.append(float(np.max(np.abs(self.values[inside]))))
        return max(cands)

    def breakpoints(self, horizon: float) -> np.ndarray:
        """Interior kink times of the curve within (0, horizon)."""
        if self.kind != SAMPLED:
            return np.empty(0)
        t = self.times
        return t[(t > 0.0) & (t < horizon)]


@dataclass(frozen=True)
class UtilitySpec:
    """Utility variant: exponential (-exp(-beta x)), power (-x^-gamma / gamma), or log."""

    kind: str
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == EXPONENTIAL:
            if not self.beta > 0.0:
                raise ValueError("exponential utility needs beta > 0")
        elif self.kind == POWER:
            if not self.gamma > 0.0:
                raise ValueError("power utility needs gamma > 0")
        elif self.kind != LOG:
            raise ValueError(f"unknown utility kind {self.kind!r}")

    @classmethod
    def exponential(cls, beta: float) -> "UtilitySpec":
        return cls(EXPONENTIAL, beta=float(beta))

    @classmethod
    def power(cls, gamma: float) -> "UtilitySpec":
        return cls(POWER, gamma=float(gamma))

    @classmethod
    def log(cls) -> "UtilitySpec":
        return cls(LOG)

    @classmethod
    def from_config(cls, cfg: dict) -> "UtilitySpec":
        kind = cfg.get("type")
        if kind == "exponential":
            return cls.exponential(cfg["beta"])
        if kind == "power":
            return cls.power(cfg["gamma"])
        if kind == "log":
            return cls.log()
        raise ValueError(f"unknown utility type {kind!r}")

    def to_config(self) -> dict:
        if self.kind == EXPONENTIAL:
            return {"type": "exponential", "beta": self.beta}
        if self.kind == POWER:
            return {"type": "power", "gamma": self.gamma}
        return {"type": "log"}

    def evaluate(self, x):
        if self.kind == EXPONENTIAL:
            return -np.exp(-self.beta * np.asarray(x, dtype=float))
        if np.any(np.asarray(x) <= 0.0):
            raise ValueError("power/log utility needs positive wealth")
        if self.kind == POWER:
            return -np.power(np.asarray(x, dtype=float), -self.gamma) / self.gamma
        return np.log(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class LiabilitySpec:
    """Terminal liability: zero, a deterministic cash amount, or a bounded
    piecewise-linear payoff of the terminal canonical-process value,
    tabulated on a grid (held constant beyond the tabulated range so the
    payoff stays bounded)."""

    kind: str
    xi: float = 0.0
    payoff_x: np.ndarray | None = None
    payoff_g: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind == ZERO:
            return
        if self.kind == DETERMINISTIC:
            if not math.isfinite(self.xi):
                raise ValueError("deterministic liability must be finite")
            return
        if self.kind != MARKOV:
            raise ValueError(f"unknown liability kind {self.kind!r}")
        x = np.asarray(self.payoff_x, dtype=float)
        g = np.asarray(self.payoff_g, dtype=float)
        if x.ndim != 1 or x.shape != g.shape or x.size < 2:
            raise ValueError("markov payoff needs matching 1-d grids, length >= 2")
        if not np.all(np.diff(x) > 0):
            raise ValueError("markov payoff grid must be strictly ascending")
        if not np.all(np.isfinite(g)):
            raise ValueError("markov payoff values must be bounded")
        object.__setattr__(self, "payoff_x", x)
        object.__setattr__(self, "payoff_g", g)

    @classmethod
    def zero(cls) -> "LiabilitySpec":
        return cls(ZERO)

    @classmethod
    def deterministic(cls, xi: float) -> "LiabilitySpec":
        return cls(DETERMINISTIC, xi=float(xi))

    @classmethod
    def markov_payoff(cls, x, g) -> "LiabilitySpec":
        return cls(MARKOV, payoff_x=np.asarray(x, float), payoff_g=np.asarray(g, float))

    @classmethod
    def from_config(cls, cfg: dict) -> "LiabilitySpec":
        kind = cfg.get("type")
        if kind == "zero":
            return cls.zero()
        if kind == "deterministic":
            return cls.deterministic(cfg["xi"])
        if kind == "markov":
            return cls.markov_payoff(cfg["x"], cfg["g"])
        raise ValueError(f"unknown liability type {kind!r}")

    def to_config(self) -> dict:
        if self.kind == ZERO:
            return {"type": "zero"}
        if self.kind == DETERMINISTIC:
            return {"type": "deterministic", "xi": self.xi}
        return {"type": "markov", "x": self.payoff_x.tolist(), "g": self.payoff_g.tolist()}

    def terminal_payoff(self, x):
        """Payoff value at terminal canonical-process value ``x``."""
        if self.kind == MARKOV:
            return np.interp(np.asarray(x, dtype=float), self.payoff_x, self.payoff_g)
        base = self.xi if self.kind == DETERMINISTIC else 0.0
        return np.full_like(np.asarray(x, dtype=float), base)

    @property
    def is_deterministic(self) -> bool:
        return self.kind in (ZERO, DETERMINISTIC)

    @property
    def cash_value(self) -> float:
        if not self.is_deterministic:
            raise ValueError("liability is not deterministic")
        return self.xi if self.kind == DETERMINISTIC else 0.0


@dataclass(frozen=True, eq=False)
class MarketSpec:
    """Full problem specification handed to the solvers."""

    horizon: float
    band: VolatilityBand
    drift: DriftCurve
    constraint: ConstraintSet = field(default_factory=ConstraintSet.full_space)
    utility: UtilitySpec = field(default_factory=lambda: UtilitySpec.exponential(1.0))
    liability: LiabilitySpec = field(default_factory=LiabilitySpec.zero)

    def __post_init__(self) -> None:
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")
        if self.utility.kind in (POWER, LOG) and self.liability.kind != ZERO:
            raise ValueError("power and log utilities require the zero liability")
        if self.drift.kind == SAMPLED:
            t = self.drift.times
            if t[0] > 1e-12 or t[-1] < self.horizon - 1e-12:
                raise ValueError("sampled drift grid must cover [0, horizon]")

    def replace_liability(self, liability: LiabilitySpec) -> "MarketSpec":
        return MarketSpec(self.horizon, self.band, self.drift, self.constraint,
                          self.utility, liability)

    def theta_bound(self) -> float:
        """Bound on |theta(t, a)| over the horizon and the band."""
        return self.drift.max_abs(self.horizon) / math.sqrt(self.band.a_lo)


def theta(t, a, drift: DriftCurve):
    """Market price of risk ``b(t) / sqrt(a)`` at volatility level ``a > 0``."""
    a_arr = np.asarray(a, dtype=float)
    if np.any(a_arr <= 0.0):
        raise ValueError(f"volatility level must be positive, got {a}")
    out = drift(t) / np.sqrt(a_arr)
    return float(out) if np.ndim(out) == 0 else out
