import math

import numpy as np
import pytest

from uvolmax.constraints import (ConstraintSet, distance, min_norm, project,
                                 scale_set)

FULL = ConstraintSet.full_space()
BAND_01 = ConstraintSet.interval(1.0, 2.0)
UNION = ConstraintSet.union_of_intervals([(-3.0, -2.0), (1.0, 2.0)])
HALF_LINE = ConstraintSet.interval(0.0, math.inf)

VARIANTS = [
    FULL,
    BAND_01,
    ConstraintSet.interval(-1.0, 3.0),
    HALF_LINE,
    ConstraintSet.interval(-math.inf, 0.5),
    UNION,
    ConstraintSet.union_of_intervals([(-1.0, -1.0), (1.0, 1.0)]),
    ConstraintSet.union_of_intervals([(-3.0, -2.0), (4.0, 5.0)]),
]


def test_distance_examples():
    assert distance(0.5, BAND_01) == 0.5
    assert distance(1.5, BAND_01) == 0.0
    assert distance(0.0, UNION) == 1.0


def test_project_examples():
    assert project(3.0, BAND_01) == 2.0
    assert project(1.5, BAND_01) == 1.5
    two_points = ConstraintSet.union_of_intervals([(-1.0, -1.0), (1.0, 1.0)])
    assert project(0.0, two_points) == -1.0  # tie resolves leftmost


def test_scale_examples():
    assert scale_set(BAND_01, 4.0).intervals == ((2.0, 4.0),)
    assert scale_set(FULL, 2.7) is FULL
    scaled = scale_set(ConstraintSet.interval(-1.0, 3.0), 0.25)
    assert scaled.intervals == ((-0.5, 1.5),)


def test_min_norm_examples():
    assert min_norm(BAND_01) == 1.0
    assert min_norm(FULL) == 0.0
    assert min_norm(ConstraintSet.union_of_intervals([(-3.0, -2.0), (4.0, 5.0)])) == 2.0


def test_scale_requires_positive():
    with pytest.raises(ValueError):
        scale_set(BAND_01, 0.0)
    with pytest.raises(ValueError):
        scale_set(BAND_01, -1.0)


def test_invalid_sets_rejected():
    with pytest.raises(ValueError):
        ConstraintSet.interval(2.0, 1.0)
    with pytest.raises(ValueError):
        ConstraintSet.union_of_intervals([(-1.0, 0.5), (0.0, 1.0)])
    with pytest.raises(ValueError):
        ConstraintSet.union_of_intervals([])
    with pytest.raises(ValueError):
        ConstraintSet.interval(math.inf, math.inf)


def test_infinite_endpoints():
    assert distance(-5.0, HALF_LINE) == 5.0
    assert project(-5.0, HALF_LINE) == 0.0
    assert distance(7.0, HALF_LINE) == 0.0
    left = ConstraintSet.interval(-math.inf, 0.5)
    assert distance(-100.0, left) == 0.0
    assert project(3.0, left) == 0.5


def test_vectorized_shapes():
    xs = np.linspace(-4.0, 4.0, 17).reshape(17, 1)
    d = distance(xs, UNION)
    p = project(xs, UNION)
    assert d.shape == xs.shape and p.shape == xs.shape
    assert np.all(np.abs(xs - p).ravel() == d.ravel())


def test_distance_equals_gap_to_projection():
    rng = np.random.default_rng(7)
    xs = rng.uniform(-10.0, 10.0, size=500)
    for cset in VARIANTS:
        d = distance(xs, cset)
        p = project(xs, cset)
        assert np.allclose(d * d, (xs - p) ** 2, rtol=0.0, atol=1e-12)
        assert np.all(distance(p, cset) <= 1e-12)


def test_distance_is_one_lipschitz():
    rng = np.random.default_rng(11)
    xs = rng.uniform(-10.0, 10.0, size=400)
    ys = rng.uniform(-10.0, 10.0, size=400)
    for cset in VARIANTS:
        lhs = np.abs(distance(xs, cset) - distance(ys, cset))
        assert np.all(lhs <= np.abs(xs - ys) + 1e-12)


def test_projection_idempotent():
    rng = np.random.default_rng(13)
    xs = rng.uniform(-10.0, 10.0, size=400)
    for cset in VARIANTS:
        p = project(xs, cset)
        assert np.array_equal(project(p, cset), p)


def test_scaling_identity():
    rng = np.random.default_rng(17)
    xs = rng.uniform(-10.0, 10.0, size=200)
    for cset in VARIANTS:
        for a in (0.25, 1.0, 4.0, 0.09):
            root = math.sqrt(a)
            scaled = scale_set(cset, a)
            assert np.allclose(distance(root * xs, scaled),
                               root * distance(xs, cset), rtol=1e-14, atol=1e-12)


def test_min_norm_of_scaled_set_bounded():
    # witness for the uniform bound: min-norm of the scaled set stays below
    # sqrt(a_hi) times the unscaled min-norm for every a in the band
    a_hi = 1.7
    for cset in VARIANTS:
        base = min_norm(cset)
        for a in np.linspace(0.05, a_hi, 12):
            assert min_norm(scale_set(cset, a)) <= math.sqrt(a_hi) * base + 1e-12


def test_config_round_trip():
    for cset in VARIANTS:
        again = ConstraintSet.from_config(cset.to_config())
        assert again == cset
    assert ConstraintSet.from_config({"type": "interval", "lo": None, "hi": 2}) \
        == ConstraintSet.interval(-math.inf, 2.0)
