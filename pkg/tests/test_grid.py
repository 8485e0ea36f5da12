import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gequation.errors import ConfigurationError, DimensionError
from gequation.grid import (PeriodicGrid, ScalarField, central_gradient, interpolate, laplacian, load_binary,
                            load_csv, mean, mean_curvature, one_sided_gradients, osc, save_binary, save_csv)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def field_2d(n):
    return arrays(np.float64, (n, n), elements=finite)


def test_grid_bookkeeping():
    g = PeriodicGrid(2, 64)
    assert g.n == (64, 64)
    assert g.h * 64 == pytest.approx(2 * math.pi, rel=1e-15)
    assert g.axis(0)[0] == pytest.approx(0.5 * g.h)
    g3 = PeriodicGrid(3, (16, 8, 12), period=(1.0, 2.0, 3.0))
    assert g3.spacing == (1.0 / 16, 2.0 / 8, 3.0 / 12)
    assert g3.points().shape == (16, 8, 12, 3)


def test_grid_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        PeriodicGrid(2, 4)
    with pytest.raises(ConfigurationError):
        PeriodicGrid(4, 16)
    with pytest.raises(ConfigurationError):
        PeriodicGrid(2, 16, period=-1.0)
    with pytest.raises(DimensionError):
        ScalarField(PeriodicGrid(2, 8), np.zeros((8, 9)))
    with pytest.raises(ConfigurationError):
        ScalarField(PeriodicGrid(2, 8), np.full((8, 8), np.nan))


def test_constant_gradients_vanish():
    f = ScalarField(PeriodicGrid(3, 8), np.full((8, 8, 8), 3.5))
    for dm, dp in one_sided_gradients(f):
        assert np.array_equal(dm.values, np.zeros((8, 8, 8)))
        assert np.array_equal(dp.values, np.zeros((8, 8, 8)))


def test_forward_difference_of_sine():
    g = PeriodicGrid(2, 256)
    X1, _ = g.mesh()
    (dm, dp), _ = one_sided_gradients(ScalarField(g, np.sin(X1)))
    assert np.max(np.abs(dp.values - np.cos(X1))) <= 0.51 * g.h
    assert np.max(np.abs(dm.values - np.cos(X1))) <= 0.51 * g.h


def test_sawtooth_slope_away_from_seam():
    g = PeriodicGrid(2, 16)
    a = np.broadcast_to(np.arange(16.0)[:, None], (16, 16)).copy()
    (dm, dp), _ = one_sided_gradients(ScalarField(g, a))
    assert np.allclose(dp.values[:-1], 1.0 / g.h, rtol=1e-14)
    assert np.allclose(dm.values[1:], 1.0 / g.h, rtol=1e-14)
    assert np.all(dp.values[-1] < 0) and np.all(dm.values[0] < 0)


def test_curvature_of_planar_field_vanishes():
    g = PeriodicGrid(2, 32)
    k = mean_curvature(g.zeros(), [0.6, -0.8])
    assert np.max(np.abs(k.values)) < 1e-14


def test_curvature_of_circle():
    g = PeriodicGrid(2, 256)
    c = np.array([math.pi, math.pi])
    R = 1.0
    X1, X2 = g.mesh()
    r = np.hypot(X1 - c[0], X2 - c[1])
    p = np.array([0.3, 0.2])
    # G = |x - c| - R written as p.x + v; the seam is far from the circle
    v = r - R - (p[0] * X1 + p[1] * X2)
    k = mean_curvature(ScalarField(g, v), p).values
    near = np.abs(r - R) < g.h
    assert near.sum() > 100
    assert np.all(np.abs(k[near] * R - 1.0) < 0.05)


def test_curvature_finite_at_degenerate_gradient():
    g = PeriodicGrid(2, 32)
    X1, X2 = g.mesh()
    v = np.cos(X1) * np.cos(X2)
    # q = p + Dv vanishes at cells where Dv = 0 and p = 0
    k = mean_curvature(ScalarField(g, v), [0.0, 0.0], eps=1e-6)
    assert np.all(np.isfinite(k.values))
    with pytest.raises(ConfigurationError):
        mean_curvature(ScalarField(g, v), [0.0, 0.0], eps=0.0)


def test_interpolation_examples():
    g = PeriodicGrid(2, 16)
    rng = np.random.default_rng(0)
    f = ScalarField(g, rng.normal(size=g.shape))
    pts = g.points()
    assert interpolate(f, pts[3, 5]) == pytest.approx(f.values[3, 5], abs=1e-14)
    mid = 0.5 * (pts[3, 5] + pts[4, 5])
    assert interpolate(f, mid) == pytest.approx(0.5 * (f.values[3, 5] + f.values[4, 5]), abs=1e-14)
    # periodic wrap
    assert interpolate(f, pts[3, 5] + np.array([2 * math.pi, -4 * math.pi])) == pytest.approx(f.values[3, 5])


def test_interpolation_exact_on_linear_data():
    g = PeriodicGrid(2, 16)
    X1, _ = g.mesh()
    f = ScalarField(g, 2.0 * X1 - 1.0)
    h = g.h
    for x1 in [3 * h + 0.25 * h, 7 * h + 0.75 * h, 10.5 * h]:
        assert interpolate(f, [x1, 1.0]) == pytest.approx(2.0 * x1 - 1.0, abs=1e-12)


@settings(max_examples=50)
@given(field_2d(8), st.lists(st.floats(-50, 50), min_size=2, max_size=2))
def test_interpolation_bounded(a, x):
    f = ScalarField(PeriodicGrid(2, 8), a)
    val = interpolate(f, x)
    assert a.min() - 1e-9 * (1 + abs(a.min())) <= val <= a.max() + 1e-9 * (1 + abs(a.max()))


def test_mean_and_osc():
    g = PeriodicGrid(2, 128)
    assert mean(ScalarField(g, np.full(g.shape, 2.5))) == 2.5
    assert osc(ScalarField(g, np.full(g.shape, 2.5))) == 0.0
    X1, _ = g.mesh()
    s = ScalarField(g, np.sin(X1))
    assert abs(mean(s)) < 1e-12
    assert osc(s) == pytest.approx(2.0, abs=1e-3)
    i, j = np.indices((8, 8))
    board = ScalarField(PeriodicGrid(2, 8), ((i + j) % 2).astype(float))
    assert mean(board) == 0.5 and osc(board) == 1.0


@settings(max_examples=50)
@given(field_2d(8))
def test_summation_by_parts(a):
    f = ScalarField(PeriodicGrid(2, 8), a)
    scale = 1.0 + np.max(np.abs(a))
    for dm, dp in one_sided_gradients(f):
        assert abs(dp.values.mean()) < 1e-12 * scale / f.grid.h
        assert abs(dm.values.mean()) < 1e-12 * scale / f.grid.h


def test_laplacian_and_central_gradient_of_sine():
    g = PeriodicGrid(2, 64)
    X1, X2 = g.mesh()
    f = ScalarField(g, np.sin(X1) * np.cos(2 * X2))
    lap = laplacian(f).values
    # Taylor: second differences err by h^2/12 max|f''''| per axis
    assert np.max(np.abs(lap + 5 * f.values)) <= (1 + 16) / 12 * g.h ** 2
    gx, gy = central_gradient(f)
    assert np.max(np.abs(gx.values - np.cos(X1) * np.cos(2 * X2))) <= g.h ** 2 / 6
    assert np.max(np.abs(gy.values + 2 * np.sin(X1) * np.sin(2 * X2))) <= 8 * g.h ** 2 / 6


def test_serialization_round_trip(tmp_path):
    g = PeriodicGrid(3, (8, 10, 12), period=(1.0, 2.0, 2 * math.pi))
    rng = np.random.default_rng(3)
    f = ScalarField(g, rng.normal(size=g.shape) * 1e3)
    save_csv(f, tmp_path / "f.csv")
    save_binary(f, tmp_path / "f.bin")
    for loaded in (load_csv(tmp_path / "f.csv"), load_binary(tmp_path / "f.bin")):
        assert loaded.grid == g
        assert np.array_equal(loaded.values, f.values)
    # x varies fastest in the flat layout
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert float(lines[2]) == f.values[1, 0, 0]
