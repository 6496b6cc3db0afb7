import numpy as np

from flowreg.fields import BandlimitedField
from flowreg.warping import (
    dice_scores,
    interp_with_gradient,
    jacobian_determinant_map,
    warp_image,
    warp_image_with_gradient,
    warp_labels,
)

from conftest import random_hermitian_field


def constant_displacement(shift, grid_dims):
    d = len(grid_dims)
    c = np.zeros((d, 4, 4), np.complex128)
    for i, s in enumerate(shift):
        c[i, 2, 2] = s
    return BandlimitedField(c, tuple(grid_dims))


def test_identity_warp_is_exact(rng):
    img = rng.standard_normal((12, 12))
    u = constant_displacement((0.0, 0.0), img.shape)
    assert np.array_equal(warp_image(img, u), img)


def test_integer_shift_warp(rng):
    img = rng.standard_normal((12, 12))
    u = constant_displacement((3.0, -2.0), img.shape)
    # sampling at x + u pulls intensities from downstream voxels
    expect = np.roll(img, (-3, 2), axis=(0, 1))
    assert np.max(np.abs(warp_image(img, u) - expect)) < 1e-12


def test_interpolation_linear_exactness():
    # multilinear sampling reproduces an affine image exactly away from the wrap
    x, y = np.meshgrid(np.arange(20), np.arange(20), indexing="ij")
    img = 2.0 + 0.25 * x + 0.5 * y
    pos = np.stack([x + 0.3, y + 0.45])
    val, grad = interp_with_gradient(img, pos)
    inner = (slice(2, -3), slice(2, -3))
    assert np.max(np.abs(val[inner] - (2.0 + 0.25 * pos[0] + 0.5 * pos[1])[inner])) < 1e-12
    assert np.max(np.abs(grad[0][inner] - 0.25)) < 1e-12
    assert np.max(np.abs(grad[1][inner] - 0.5)) < 1e-12


def test_sampler_gradient_matches_fd(rng):
    img = rng.standard_normal((16, 16))
    u = 0.8 * np.stack([rng.random((16, 16)), rng.random((16, 16))]) + 0.05
    _, g = warp_image_with_gradient(img, u)
    h = 1e-7
    for axis in range(2):
        du = np.zeros_like(u)
        du[axis] = h
        wp, _ = warp_image_with_gradient(img, u + du)
        wm, _ = warp_image_with_gradient(img, u - du)
        fd = (wp - wm) / (2.0 * h)
        assert np.max(np.abs(fd - g[axis])) < 1e-6


def test_warp_labels_nearest(rng):
    labels = rng.integers(0, 3, (10, 10)).astype(np.int32)
    u = constant_displacement((1.0, 0.0), labels.shape)
    assert np.array_equal(warp_labels(labels, u), np.roll(labels, -1, axis=0))


def test_jacobian_det_identity():
    u = constant_displacement((0.0, 0.0), (20, 20))
    assert np.allclose(jacobian_determinant_map(u), 1.0)


def test_jacobian_det_uniform_scaling():
    # u = c * sin field: det averages to 1 over the torus (volume preserving
    # in the mean); check the map is finite and centered near 1 for small u
    f = 0.02 * random_hermitian_field((6, 6), (40, 40), np.random.default_rng(0))
    det = jacobian_determinant_map(f)
    assert np.all(np.isfinite(det))
    assert abs(det.mean() - 1.0) < 1e-3


def test_dice_definition():
    a = np.zeros((20, 10), np.int32)
    b = np.zeros((20, 10), np.int32)
    a[:10, :] = 1  # |A| = 100
    b[5:15, :] = 1  # |B| = 100, overlap 50
    scores = dice_scores(a, b)
    assert scores[1] == 2.0 * 50 / 200


def test_dice_identity_is_one(rng):
    labels = rng.integers(0, 3, (15, 15)).astype(np.int32)
    scores = dice_scores(labels, labels.copy())
    assert all(v == 1.0 for v in scores.values())
