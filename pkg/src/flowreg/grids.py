"""Frequency-window bookkeeping for truncated Fourier fields.

Coefficients are stored on a centered window: along an axis of size n the
entry at index i carries the integer frequency k = i - n//2.  For even n
the extreme row k = -n/2 has no conjugate partner inside the window, so it
is pinned to zero; this keeps every stored field exactly representable as
a real spatial signal at any resolution the window is embedded into.

The transform convention is numpy's ``norm="forward"``: coefficients are
mode amplitudes, so a constant spatial field c corresponds to a single
zero-frequency coefficient equal to c, independent of grid resolution.
Under this convention the spatial/spectral Parseval relation reads
``sum_x f(x) g(x) = M * Re<f~, g~>`` with M the number of grid points.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def axis_freqs(n: int) -> np.ndarray:
    """Integer frequencies of a centered window of size n."""
    return np.arange(n) - n // 2


@lru_cache(maxsize=None)
def embed_indices(trunc_dims: tuple, grid_dims: tuple):
    """Per-axis index arrays placing the centered window into an fft-ordered grid."""
    if len(trunc_dims) != len(grid_dims):
        raise ValueError("dimension mismatch between window and grid")
    for n, p in zip(trunc_dims, grid_dims):
        if n > p:
            raise ValueError(f"truncation {trunc_dims} exceeds grid {grid_dims}")
    return tuple(axis_freqs(n) % p for n, p in zip(trunc_dims, grid_dims))


@lru_cache(maxsize=None)
def nyquist_free_mask(trunc_dims: tuple) -> np.ndarray:
    """Boolean mask of window entries that carry free degrees of freedom.

    False marks the unpaired k = -n/2 rows of even-sized axes, which are
    structurally zero.
    """
    mask = np.ones(trunc_dims, dtype=bool)
    for ax, n in enumerate(trunc_dims):
        if n % 2 == 0:
            sl = [slice(None)] * len(trunc_dims)
            sl[ax] = 0
            mask[tuple(sl)] = False
    mask.setflags(write=False)
    return mask


def zero_nyquist(coeffs: np.ndarray, ndim_spatial: int) -> np.ndarray:
    """Zero the unpaired rows in place (trailing ``ndim_spatial`` axes)."""
    trunc = coeffs.shape[-ndim_spatial:]
    mask = nyquist_free_mask(tuple(trunc))
    coeffs[..., ~mask] = 0.0
    return coeffs


def conjugate_reflect(coeffs: np.ndarray, ndim_spatial: int) -> np.ndarray:
    """conj(c(-k)) over the window; the Hermitian partner array."""
    axes = tuple(range(coeffs.ndim - ndim_spatial, coeffs.ndim))
    out = np.conj(np.flip(coeffs, axis=axes))
    for ax in axes:
        # even axes carry frequencies -n/2 .. n/2-1, so negation wraps by
        # one slot; odd axes are symmetric about zero and a flip suffices
        if coeffs.shape[ax] % 2 == 0:
            out = np.roll(out, 1, axis=ax)
    return out


def hermitian_project(coeffs: np.ndarray, ndim_spatial: int) -> np.ndarray:
    """Nearest Hermitian-symmetric array (real spatial counterpart)."""
    sym = 0.5 * (coeffs + conjugate_reflect(coeffs, ndim_spatial))
    return zero_nyquist(sym, ndim_spatial)


def hermitian_error(coeffs: np.ndarray, ndim_spatial: int) -> float:
    """Max deviation from Hermitian symmetry."""
    dev = coeffs - conjugate_reflect(coeffs, ndim_spatial)
    nyq = np.abs(coeffs[..., ~nyquist_free_mask(tuple(coeffs.shape[-ndim_spatial:]))])
    return max(float(np.max(np.abs(dev))), float(nyq.max()) if nyq.size else 0.0)
