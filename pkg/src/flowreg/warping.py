"""Spatial-domain warping on the torus: interpolation, labels, diagnostics."""

from __future__ import annotations

import itertools

import numpy as np

from .fields import BandlimitedField, to_spatial, validate_image


def _identity_grid(shape) -> np.ndarray:
    axes = [np.arange(n, dtype=np.float64) for n in shape]
    return np.stack(np.meshgrid(*axes, indexing="ij"))


def interp_with_gradient(img: np.ndarray, pos: np.ndarray):
    """Multilinear periodic sampling of img at pos, plus its exact derivative.

    pos has shape (d, *out_shape).  The returned gradient g[i] is the exact
    piecewise derivative of the interpolant with respect to pos[i], which is
    what the chain rule through the sampler needs (not a separate stencil).
    """
    d = pos.shape[0]
    base = np.floor(pos).astype(np.int64)
    frac = pos - base
    val = np.zeros(pos.shape[1:])
    grad = np.zeros_like(pos)
    for corner in itertools.product((0, 1), repeat=d):
        idx = tuple((base[i] + corner[i]) % img.shape[i] for i in range(d))
        sv = img[idx]
        w = np.ones(pos.shape[1:])
        for j in range(d):
            w = w * (frac[j] if corner[j] else 1.0 - frac[j])
        val += w * sv
        for i in range(d):
            gw = np.ones(pos.shape[1:])
            for j in range(d):
                if j == i:
                    continue
                gw = gw * (frac[j] if corner[j] else 1.0 - frac[j])
            grad[i] += (1.0 if corner[i] else -1.0) * gw * sv
    return val, grad


def warp_image(S: np.ndarray, u: BandlimitedField) -> np.ndarray:
    """Deformed image S(x + u(x)) with periodic multilinear interpolation."""
    S = validate_image(S)
    if tuple(S.shape) != tuple(u.grid_dims):
        raise ValueError("image dims do not match the displacement grid")
    pos = _identity_grid(S.shape) + to_spatial(u)
    val, _ = interp_with_gradient(S, pos)
    return val


def warp_image_with_gradient(S: np.ndarray, u_spatial: np.ndarray):
    """Warp by an explicit spatial displacement; also return the sampler gradient."""
    S = validate_image(S)
    pos = _identity_grid(S.shape) + u_spatial
    return interp_with_gradient(S, pos)


def warp_labels(labels: np.ndarray, u: BandlimitedField) -> np.ndarray:
    """Nearest-neighbor label transport under the same displacement."""
    if tuple(labels.shape) != tuple(u.grid_dims):
        raise ValueError("label dims do not match the displacement grid")
    pos = _identity_grid(labels.shape) + to_spatial(u)
    idx = tuple(np.rint(pos[i]).astype(np.int64) % labels.shape[i] for i in range(pos.shape[0]))
    return labels[idx]


def jacobian_determinant_map(u: BandlimitedField) -> np.ndarray:
    """Per-voxel det(I + Du) via central differences on the full grid."""
    usp = to_spatial(u)
    d = usp.shape[0]
    J = np.empty((d, d, *usp.shape[1:]))
    for i in range(d):
        for j in range(d):
            J[i, j] = 0.5 * (np.roll(usp[i], -1, axis=j) - np.roll(usp[i], 1, axis=j))
            if i == j:
                J[i, j] += 1.0
    if d == 2:
        return J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if d == 3:
        return (
            J[0, 0] * (J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1])
            - J[0, 1] * (J[1, 0] * J[2, 2] - J[1, 2] * J[2, 0])
            + J[0, 2] * (J[1, 0] * J[2, 1] - J[1, 1] * J[2, 0])
        )
    raise ValueError("only 2D and 3D displacements are supported")


def dice_scores(a: np.ndarray, b: np.ndarray, labels=None) -> dict:
    """Sorensen-Dice overlap 2|A&B| / (|A|+|B|) per label value."""
    if labels is None:
        labels = np.union1d(np.unique(a), np.unique(b))
    out = {}
    for lab in labels:
        asel = a == lab
        bsel = b == lab
        denom = int(asel.sum()) + int(bsel.sum())
        out[int(lab)] = 1.0 if denom == 0 else 2.0 * int((asel & bsel).sum()) / denom
    return out
