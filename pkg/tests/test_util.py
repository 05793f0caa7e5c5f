from __future__ import annotations

import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlab.util import (
    atomic_write_json,
    fit_loglog_slope,
    fit_loglog_slope2,
    make_rng,
    next_pow2,
    wedge_norm,
)


def test_rng_is_reproducible():
    a = make_rng(7).normal(size=5)
    b = make_rng(7).normal(size=5)
    assert np.array_equal(a, b)
    c = make_rng(8).normal(size=5)
    assert not np.array_equal(a, c)


def test_next_pow2():
    assert [next_pow2(k) for k in (1, 2, 3, 5, 64, 65)] == [1, 2, 4, 8, 64, 128]


def test_wedge_norm_planar_equals_cross_product():
    rng = make_rng(0)
    x = rng.normal(size=(50, 2))
    y = rng.normal(size=(50, 2))
    cross = np.abs(x[:, 0] * y[:, 1] - x[:, 1] * y[:, 0])
    assert np.allclose(wedge_norm(x, y), cross, atol=1e-12)


def test_wedge_norm_3d_equals_cross_product():
    rng = make_rng(1)
    x = rng.normal(size=(50, 3))
    y = rng.normal(size=(50, 3))
    cross = np.linalg.norm(np.cross(x, y), axis=-1)
    assert np.allclose(wedge_norm(x, y), cross, atol=1e-10)


def test_wedge_norm_parallel_is_zero():
    x = np.array([1.0, 2.0, 3.0])
    assert wedge_norm(x, 2.5 * x) < 1e-12


@settings(max_examples=200)
@given(
    st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2),
    st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2),
    st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2),
)
def test_wedge_triangle_inequality_in_plane(xl, yl, wl):
    # |x ^ y| <= |y| |x . w| + |x| |y . w| for any unit w in the plane
    x = np.asarray(xl)
    y = np.asarray(yl)
    w = np.asarray(wl)
    if np.linalg.norm(w) < 1e-6:
        return
    w = w / np.linalg.norm(w)
    lhs = wedge_norm(x, y)
    rhs = np.linalg.norm(y) * abs(x @ w) + np.linalg.norm(x) * abs(y @ w)
    assert lhs <= rhs + 1e-7 * (1 + rhs)


def test_wedge_inequality_bulk():
    # same inequality, dense random sweep in 2d and 3d; the direction w must
    # lie in span{x, y} (off-plane w sees no component of either vector)
    rng = make_rng(123)
    for n in (2, 3):
        x = rng.normal(size=(100_000, n))
        y = rng.normal(size=(100_000, n))
        coef = rng.normal(size=(100_000, 2))
        w = coef[:, :1] * x + coef[:, 1:] * y
        w /= np.maximum(np.linalg.norm(w, axis=-1, keepdims=True), 1e-12)
        lhs = wedge_norm(x, y)
        rhs = np.linalg.norm(y, axis=-1) * np.abs(np.sum(x * w, axis=-1)) + np.linalg.norm(
            x, axis=-1
        ) * np.abs(np.sum(y * w, axis=-1))
        assert np.all(lhs <= rhs + 1e-9 * (1.0 + rhs))


def test_wedge_equality_example():
    x = np.array([1.0, 0.0])
    y = np.array([0.0, 1.0])
    w = np.array([1.0, 0.0])
    lhs = wedge_norm(x, y)
    rhs = np.linalg.norm(y) * abs(x @ w) + np.linalg.norm(x) * abs(y @ w)
    assert lhs == pytest.approx(1.0, abs=1e-14)
    assert rhs == pytest.approx(1.0, abs=1e-14)


def test_loglog_slope_recovers_power_law():
    x = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    y = 3.0 * x**-1.5
    slope, intercept, resid = fit_loglog_slope(x, y)
    assert slope == pytest.approx(-1.5, abs=1e-12)
    assert np.exp(intercept) == pytest.approx(3.0, rel=1e-12)
    assert resid < 1e-12


def test_loglog_slope2_recovers_two_exponents():
    a = np.array([1.0, 2.0, 4.0, 1.0, 2.0, 4.0, 1.0, 2.0, 4.0])
    b = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 4.0, 4.0, 4.0])
    y = 0.7 * a**2.0 * b**-0.5
    s1, s2, c, resid = fit_loglog_slope2(a, b, y)
    assert s1 == pytest.approx(2.0, abs=1e-12)
    assert s2 == pytest.approx(-0.5, abs=1e-12)
    assert resid < 1e-12


def test_loglog_slope2_rejects_degenerate_grid():
    with pytest.raises(ValueError, match="degenerate"):
        fit_loglog_slope2([1, 2, 4], [3, 3, 3], [1, 1, 1])


def test_atomic_json_roundtrip(tmp_path):
    path = os.path.join(tmp_path, "out.json")
    atomic_write_json(path, {"a": 1, "b": [1.5, "x"]})
    with open(path) as fh:
        assert json.load(fh) == {"a": 1, "b": [1.5, "x"]}
    assert not [p for p in os.listdir(tmp_path) if p.endswith(".tmp")]
