"""Closed one-dimensional strategy-constraint sets with exact metric operations.

A constraint set restricts admissible strategy values to a closed subset of
the real line: the full line, a closed interval (endpoints may be infinite),
or a finite union of disjoint closed intervals.  Every solver in this package
reduces its strategy optimization to a nearest-point projection onto the
volatility-scaled image of such a set, so `distance` and `project` are exact
(no iteration) for all variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FULL = "full"
INTERVAL = "interval"
UNION = "union"

_INF = float("inf")


def _check_interval(lo: float, hi: float) -> None:
    if math.isnan(lo) or math.isnan(hi):
        raise ValueError("interval endpoints must not be NaN")
    if lo > hi:
        raise ValueError(f"interval endpoints out of order: [{lo}, {hi}]")
    if lo == _INF or hi == -_INF:
        raise ValueError(f"interval [{lo}, {hi}] is empty")


@dataclass(frozen=True)
class ConstraintSet:
    """Closed nonempty subset of the real line.

    `kind` is one of ``"full"``, ``"interval"``, ``"union"``.  For the union
    variant the intervals are pairwise disjoint and sorted ascending.  Use the
    classmethod constructors; they validate the invariants.
    """

    kind: str
    intervals: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.kind == FULL:
            if self.intervals:
                raise ValueError("full-space set carries no intervals")
            return
        if self.kind == INTERVAL:
            if len(self.intervals) != 1:
                raise ValueError("interval set needs exactly one interval")
            _check_interval(*self.intervals[0])
            return
        if self.kind == UNION:
            if not self.intervals:
                raise ValueError("union set must be nonempty")
            for iv in self.intervals:
                _check_interval(*iv)
            for (_, hi), (lo, _) in zip(self.intervals, self.intervals[1:]):
                if not hi < lo:
                    raise ValueError("union intervals must be disjoint and sorted ascending")
            return
        raise ValueError(f"unknown constraint-set kind {self.kind!r}")

    @classmethod
    def full_space(cls) -> "ConstraintSet":
        return cls(FULL)

    @classmethod
    def interval(cls, lo: float, hi: float) -> "ConstraintSet":
        return cls(INTERVAL, ((float(lo), float(hi)),))

    @classmethod
    def union_of_intervals(cls, intervals) -> "ConstraintSet":
        ivs = tuple(sorted((float(lo), float(hi)) for lo, hi in intervals))
        return cls(UNION, ivs)

    @classmethod
    def from_config(cls, cfg: dict) -> "ConstraintSet":
        """Build from a scenario-config mapping.

        Accepted forms: ``{"type": "full"}``, ``{"type": "interval", "lo": .., "hi": ..}``
        (missing/null endpoints mean unbounded), ``{"type": "union",
        "intervals": [[lo, hi], ...]}``.
        """
        kind = cfg.get("type")
        if kind == "full":
            return cls.full_space()
        if kind == "interval":
            lo = _endpoint(cfg.get("lo"), -_INF)
            hi = _endpoint(cfg.get("hi"), _INF)
            return cls.interval(lo, hi)
        if kind == "union":
            return cls.union_of_intervals(cfg["intervals"])
        raise ValueError(f"unknown constraint type {kind!r}")

    def to_config(self) -> dict:
        if self.kind == FULL:
            return {"type": "full"}
        if self.kind == INTERVAL:
            lo, hi = self.intervals[0]
            return {"type": "interval", "lo": _endpoint_out(lo), "hi": _endpoint_out(hi)}
        return {"type": "union", "intervals": [list(iv) for iv in self.intervals]}

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return bool(distance(x, self) <= tol)

    def is_bounded(self) -> bool:
        if self.kind == FULL:
            return False
        return self.intervals[0][0] > -_INF and self.intervals[-1][1] < _INF


def _endpoint(value, default: float) -> float:
    if value is None:
        return default
    if isinstance(value, str):
        return float(value)
    return float(value)


def _endpoint_out(v: float):
    if v == _INF:
        return "inf"
    if v == -_INF:
        return "-inf"
    return v


def _interval_distances(x: np.ndarray, cset: ConstraintSet) -> np.ndarray:
    """Stack of per-interval distances, shape (n_intervals,) + x.shape."""
    return np.stack(
        [np.maximum(np.maximum(lo - x, x - hi), 0.0) for lo, hi in cset.intervals]
    )


def distance(x, cset: ConstraintSet):
    """Distance from ``x`` to the set: ``inf {|x - r| : r in set}``.

    Vectorized over ``x``; scalar input returns a float.
    """
    xs = np.asarray(x, dtype=float)
    if cset.kind == FULL:
        out = np.zeros_like(xs)
    else:
        out = _interval_distances(xs, cset).min(axis=0)
    return float(out) if out.ndim == 0 else out


def project(x, cset: ConstraintSet):
    """Nearest point of the set to ``x``; ties resolve to the leftmost point.

    With the intervals sorted ascending, the first interval attaining the
    minimal distance holds the leftmost nearest point, so first-minimum
    selection implements the tie rule.  Vectorized over ``x``.
    """
    xs = np.asarray(x, dtype=float)
    if cset.kind == FULL:
        out = xs + 0.0
    else:
        flat = np.atleast_1d(xs)
        dists = _interval_distances(flat, cset)
        points = np.stack([np.clip(flat, lo, hi) for lo, hi in cset.intervals])
        pick = dists.argmin(axis=0)
        out = np.take_along_axis(points, pick[None, ...], axis=0)[0].reshape(xs.shape)
    return float(out) if out.ndim == 0 else out


def scale_set(cset: ConstraintSet, a: float) -> ConstraintSet:
    """Image of the set under multiplication by ``sqrt(a)``, ``a > 0``."""
    if not a > 0.0:
        raise ValueError(f"scale factor must be positive, got {a}")
    if cset.kind == FULL:
        return cset
    root = math.sqrt(a)
    scaled = tuple((lo * root, hi * root) for lo, hi in cset.intervals)
    return ConstraintSet(cset.kind, scaled)


def min_norm(cset: ConstraintSet) -> float:
    """Smallest absolute value attained on the set, ``min {|r| : r in set}``."""
    return distance(0.0, cset)
