import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gequation.errors import ConfigurationError, DimensionError
from gequation.flowlib import (FlowSpec, Profile1D, StreamSamples, beltrami_residual, divergence,
                               eval_jacobian, eval_strain, eval_velocity, flow_from_id, max_speed,
                               max_projected_speed, mean_velocity, sample_points)

CATALOG = [FlowSpec("cellular"), FlowSpec("shear2d"), FlowSpec("shear3d"), FlowSpec("abc"),
           FlowSpec("abc", coeffs=(0.5, 1.2, 0.8)), FlowSpec("kolmogorov"), FlowSpec("zero"),
           FlowSpec("zero", zero_dim=3)]

coord = st.floats(-20.0, 20.0, allow_nan=False)


def _stream_flow(n=64):
    x = np.arange(n) * (2 * math.pi / n)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    return FlowSpec("stream2d", stream=StreamSamples.from_array(np.sin(X1) * np.sin(X2), "cell"))


def test_kolmogorov_at_origin_is_zero():
    assert np.array_equal(eval_velocity(FlowSpec("kolmogorov"), [0.0, 0.0, 0.0]), np.zeros(3))


def test_abc_at_origin():
    assert np.allclose(eval_velocity(FlowSpec("abc"), [0.0, 0.0, 0.0]), [1.0, 1.0, 1.0], atol=1e-15)


def test_cellular_by_hand():
    # H = sin x1 sin x2, V = (-H_x2, H_x1) = (-sin x1 cos x2, cos x1 sin x2)
    v = eval_velocity(FlowSpec("cellular", A=2.0), [math.pi / 2, 0.0])
    assert np.allclose(v, [-2.0, 0.0], atol=1e-15)


def test_zero_flow_strain():
    assert np.array_equal(eval_strain(FlowSpec("zero"), [0.3, 1.7]), np.zeros((2, 2)))


def test_cellular_strain_at_origin():
    assert np.allclose(eval_strain(FlowSpec("cellular"), [0.0, 0.0]), np.diag([-1.0, 1.0]), atol=1e-15)


@given(coord, coord)
def test_cellular_strain_is_diag_phi(x1, x2):
    A = 1.7
    S = eval_strain(FlowSpec("cellular", A=A), [x1, x2])
    phi = math.cos(x1) * math.cos(x2)
    assert np.allclose(S, np.diag([-A * phi, A * phi]), atol=1e-12)


@given(coord, coord)
def test_shear2d_strain_offdiagonal(x1, x2):
    S = eval_strain(FlowSpec("shear2d"), [x1, x2])
    assert S[0, 0] == 0.0 and S[1, 1] == 0.0
    assert S[0, 1] == pytest.approx(0.5 * math.cos(x1), abs=1e-14)
    assert S[1, 0] == S[0, 1]


def test_max_speed_values():
    assert max_speed(FlowSpec("zero")) == 0.0
    # oracle: brute-force maximum of |V|^2 on a fine lattice
    m = 120
    for flow, exact in [(FlowSpec("abc"), math.sqrt(6.0)), (FlowSpec("kolmogorov"), math.sqrt(3.0))]:
        pts = sample_points(3, m)
        brute = math.sqrt(np.max(np.sum(eval_velocity(flow, pts) ** 2, axis=-1)))
        assert brute <= max_speed(flow) + 1e-12
        assert max_speed(flow) == pytest.approx(exact, abs=1e-8)
    assert max_speed(FlowSpec("cellular")) == pytest.approx(1.0, abs=1e-10)


def test_max_projected_speed():
    speed, proj = max_speed(FlowSpec("abc"), p=[1.0, 0.0, 0.0])
    # V.e1 = sin z + cos y, maximum 2
    assert proj == pytest.approx(2.0, abs=1e-9)
    assert max_projected_speed(FlowSpec("kolmogorov"), [1.0, 0.0, 0.0]) == pytest.approx(1.0, abs=1e-9)
    assert max_projected_speed(FlowSpec("zero", zero_dim=3), [1.0, 0.0, 0.0]) == 0.0


def test_beltrami_abc():
    assert beltrami_residual(FlowSpec("abc")) < 1e-8
    assert beltrami_residual(FlowSpec("abc", coeffs=(0.3, 1.1, 2.0))) < 1e-8


def test_beltrami_kolmogorov_matches_hand_curl():
    # curl (sin z, sin x, sin y) = (cos y, cos z, cos x)
    pts = sample_points(3, 32)
    x, y, z = pts.T
    r = np.stack([np.cos(y) - np.sin(z), np.cos(z) - np.sin(x), np.cos(x) - np.sin(y)], axis=-1)
    expected = float(np.max(np.linalg.norm(r, axis=-1)))
    assert expected > 1.0
    assert beltrami_residual(FlowSpec("kolmogorov")) == pytest.approx(expected, rel=1e-12)


def test_beltrami_zero_and_2d():
    assert beltrami_residual(FlowSpec("zero", zero_dim=3)) == 0.0
    with pytest.raises(DimensionError):
        beltrami_residual(FlowSpec("cellular"))


@pytest.mark.parametrize("flow", CATALOG, ids=lambda f: f.flow_id())
@settings(max_examples=30)
@given(data=st.data())
def test_periodic(flow, data):
    x = np.array(data.draw(st.lists(coord, min_size=flow.dim, max_size=flow.dim)))
    i = data.draw(st.integers(0, flow.dim - 1))
    shifted = x.copy()
    shifted[i] += 2 * math.pi
    assert np.allclose(eval_velocity(flow, x), eval_velocity(flow, shifted), atol=1e-12)


@pytest.mark.parametrize("flow", CATALOG, ids=lambda f: f.flow_id())
@settings(max_examples=30)
@given(data=st.data(), A=st.floats(0.0, 100.0))
def test_intensity_linear(flow, data, A):
    x = np.array(data.draw(st.lists(coord, min_size=flow.dim, max_size=flow.dim)))
    assert np.array_equal(eval_velocity(flow.with_intensity(A), x), A * eval_velocity(flow, x))


@pytest.mark.parametrize("flow", CATALOG, ids=lambda f: f.flow_id())
def test_divergence_free(flow):
    pts = sample_points(flow.dim, 24 if flow.dim == 3 else 64) + 0.1
    assert np.max(np.abs(divergence(flow, pts))) < 1e-8


def test_stream_samples_divergence_and_match():
    flow = _stream_flow()
    pts = sample_points(2, 40) + 0.05
    assert np.max(np.abs(divergence(flow, pts))) < 1e-3
    # cubic interpolation of sin x1 sin x2 sampled at n=64
    assert np.max(np.abs(eval_velocity(flow, pts) - eval_velocity(FlowSpec("cellular"), pts))) < 1e-4


@pytest.mark.parametrize("flow", CATALOG[:6], ids=lambda f: f.flow_id())
def test_strain_matches_central_differences(flow):
    rng = np.random.default_rng(1)
    h = 1e-5
    for x in rng.uniform(0, 2 * math.pi, size=(10, flow.dim)):
        J = np.empty((flow.dim, flow.dim))
        for j in range(flow.dim):
            e = np.zeros(flow.dim)
            e[j] = h
            J[:, j] = (eval_velocity(flow, x + e) - eval_velocity(flow, x - e)) / (2 * h)
        assert np.allclose(eval_strain(flow, x), 0.5 * (J + J.T), atol=1e-8)
        S = eval_strain(flow, x)
        assert np.array_equal(S, S.T)
        assert abs(np.trace(S)) < 1e-12


def test_cellular_mean_zero():
    assert np.all(np.abs(mean_velocity(FlowSpec("cellular"))) < 1e-10)


@given(coord, coord)
def test_cellular_stream_function(x1, x2):
    h = 1e-6
    H = lambda a, b: math.sin(a) * math.sin(b)
    Hx1 = (H(x1 + h, x2) - H(x1 - h, x2)) / (2 * h)
    Hx2 = (H(x1, x2 + h) - H(x1, x2 - h)) / (2 * h)
    assert np.allclose(eval_velocity(FlowSpec("cellular"), [x1, x2]), [-Hx2, Hx1], atol=1e-8)


def test_flow_ids_round_trip():
    for fid in ["zero", "zero:3", "cellular", "kolmogorov", "abc:1.0,1.0,1.0", "shear2d:sin", "shear3d:cosavg"]:
        assert flow_from_id(fid).flow_id() == fid
    assert flow_from_id("abc:1,2,3", A=2.5).A == 2.5


def test_bad_configurations():
    with pytest.raises(ConfigurationError):
        FlowSpec("vortex")
    with pytest.raises(ConfigurationError):
        FlowSpec("cellular", A=-1.0)
    with pytest.raises(ConfigurationError):
        flow_from_id("abc:1,2")
    with pytest.raises(ConfigurationError):
        Profile1D("nope")
    with pytest.raises(ConfigurationError):
        StreamSamples.from_array(np.full((8, 8), np.nan))
    with pytest.raises(DimensionError):
        eval_velocity(FlowSpec("abc"), [0.0, 0.0])


def test_profile_csv(tmp_path):
    n = 64
    x = np.arange(n) * (2 * math.pi / n)
    path = tmp_path / "f.csv"
    path.write_text("\n".join(repr(float(v)) for v in np.sin(x)) + "\n")
    flow = flow_from_id(f"shear2d:{path}")
    y = np.linspace(0, 2 * math.pi, 50)
    pts = np.stack([y, np.zeros_like(y)], axis=-1)
    assert np.max(np.abs(eval_velocity(flow, pts)[:, 1] - np.sin(y))) < 1e-5
    assert np.allclose(eval_jacobian(flow, pts)[:, 1, 0], np.cos(y), atol=1e-4)
