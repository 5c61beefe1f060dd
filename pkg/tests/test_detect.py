import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vidbound.detect import (DetectorConfig, detect_array, detect_boundaries, detect_flow_boundaries,
                             normalized_magnitude, oriented_derivatives)
from vidbound.raster import FlowField, FrameImage, check


def _gauss_kernels(sigma):
    r = int(4 * sigma + 0.5)
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * x * x / sigma ** 2)
    g /= g.sum()
    return g, -x / sigma ** 2 * g


def _brute_derivative(img, sigma, axis):
    """Direct separable correlation with mirrored borders."""
    g, dg = _gauss_kernels(sigma)
    r = len(g) // 2
    pad = np.pad(img, r, mode="symmetric")
    h, w = img.shape
    out = np.zeros((h + 2 * r, w))
    kx = dg if axis == 1 else g
    ky = g if axis == 1 else dg
    for j in range(w):
        out[:, j] = pad[:, j:j + 2 * r + 1] @ kx[::-1]
    res = np.zeros((h, w))
    for i in range(h):
        res[i] = ky[::-1] @ out[i:i + 2 * r + 1]
    return res


@pytest.mark.parametrize("sigma", [1.0, 2.0])
def test_oriented_derivatives_against_direct_convolution(sigma, rng):
    img = rng.random((20, 23))
    thetas = DetectorConfig().thetas
    got = oriented_derivatives(img, sigma, thetas)
    gx, gy = _brute_derivative(img, sigma, 1), _brute_derivative(img, sigma, 0)
    want = np.abs(np.cos(thetas)[:, None, None] * gx + np.sin(thetas)[:, None, None] * gy)
    assert np.allclose(got, want, atol=1e-12)


def test_unit_step_scores_near_one():
    img = np.zeros((32, 32))
    img[:, 16:] = 1.0
    m = detect_array(img, DetectorConfig())
    assert 0.95 <= m.max() <= 1.0
    # thin ridge: at most two columns survive suppression on each row
    assert np.all((m[:, 8:24] > 0.5).sum(axis=1) <= 2)


def test_flat_image_has_no_boundaries():
    assert detect_boundaries(FrameImage(np.full((16, 16, 3), 0.4))).data.max() == 0


def test_transpose_equivariance(rng):
    img = rng.random((24, 24))
    cfg = DetectorConfig(nonmax_suppress=False)
    assert np.allclose(detect_array(img.T, cfg), detect_array(img, cfg).T, atol=1e-12)


@given(arrays(np.float64, (12, 12), elements=st.floats(0, 1)))
def test_output_is_valid_boundary_map(a):
    assert check(detect_boundaries(FrameImage(a))) is None


def test_flow_boundaries_outline_moving_square():
    u = np.zeros((32, 32))
    u[8:24, 8:24] = 3.0
    m = detect_flow_boundaries(FlowField(u, np.zeros_like(u))).data
    assert m[16, 7:9].max() > 0.9 and m[16, 23:25].max() > 0.9
    assert m[16, 12:20].max() == 0 and m[2, :].max() == 0


def test_flow_magnitude_normalisation():
    assert normalized_magnitude(FlowField.zeros(4, 4)).max() == 0
    u = np.zeros((20, 20))
    u[0, 0] = 2.0  # fewer than 1% moving: falls back to the max
    assert normalized_magnitude(FlowField(u, np.zeros_like(u)))[0, 0] == 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(scales=())
    with pytest.raises(ValueError):
        DetectorConfig(n_orientations=2)
