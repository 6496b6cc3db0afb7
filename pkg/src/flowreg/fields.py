"""Truncated-Fourier vector fields and their spatial counterparts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grids


@dataclass(frozen=True)
class BandlimitedField:
    """A d-component vector field held as centered truncated Fourier coefficients.

    coeffs has shape (d, n_1, ..., n_d); grid_dims is the full spatial
    resolution the field refers to when rendered with :func:`to_spatial`.
    """

    coeffs: np.ndarray
    grid_dims: tuple

    def __post_init__(self):
        if self.coeffs.ndim != len(self.grid_dims) + 1:
            raise ValueError("coeffs must have one leading component axis")
        if self.coeffs.shape[0] != len(self.grid_dims):
            raise ValueError("component count must equal spatial dimension")
        for n, p in zip(self.trunc_dims, self.grid_dims):
            if n > p:
                raise ValueError("truncation exceeds grid dims")
        object.__setattr__(self, "grid_dims", tuple(self.grid_dims))

    @property
    def d(self) -> int:
        return len(self.grid_dims)

    @property
    def trunc_dims(self) -> tuple:
        return self.coeffs.shape[1:]

    def with_coeffs(self, coeffs: np.ndarray) -> "BandlimitedField":
        return BandlimitedField(coeffs, self.grid_dims)

    @classmethod
    def zeros(cls, trunc_dims, grid_dims) -> "BandlimitedField":
        d = len(grid_dims)
        return cls(np.zeros((d, *trunc_dims), dtype=np.complex128), tuple(grid_dims))

    def hermitian_error(self) -> float:
        return grids.hermitian_error(self.coeffs, self.d)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __add__(self, other):
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, s):
        return self.with_coeffs(self.coeffs * s)

    __rmul__ = __mul__


def validate_image(values: np.ndarray) -> np.ndarray:
    """Check a spatial image: real-valued, finite everywhere."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("image contains NaN or Inf")
    return values


def embed_coeffs(coeffs: np.ndarray, grid_dims, ndim_spatial: int) -> np.ndarray:
    """Place a centered window into a zero-filled fft-ordered grid."""
    trunc = tuple(coeffs.shape[-ndim_spatial:])
    idx = grids.embed_indices(trunc, tuple(grid_dims))
    lead = coeffs.shape[:-ndim_spatial]
    out = np.zeros(lead + tuple(grid_dims), dtype=np.complex128)
    out[(..., *np.ix_(*idx))] = coeffs
    return out


def extract_coeffs(full: np.ndarray, trunc_dims, ndim_spatial: int) -> np.ndarray:
    """Crop an fft-ordered spectrum back to a centered window, zeroing unpaired rows."""
    grid = tuple(full.shape[-ndim_spatial:])
    idx = grids.embed_indices(tuple(trunc_dims), grid)
    out = full[(..., *np.ix_(*idx))].astype(np.complex128, copy=True)
    return grids.zero_nyquist(out, ndim_spatial)


def coeffs_to_spatial(coeffs: np.ndarray, grid_dims, ndim_spatial: int) -> np.ndarray:
    """Render window coefficients on a real spatial grid (amplitude convention)."""
    full = embed_coeffs(coeffs, grid_dims, ndim_spatial)
    axes = tuple(range(full.ndim - ndim_spatial, full.ndim))
    return np.fft.ifftn(full, axes=axes, norm="forward").real


def spatial_to_coeffs(values: np.ndarray, trunc_dims, ndim_spatial: int) -> np.ndarray:
    """Low-pass projection of a real spatial signal onto the centered window."""
    axes = tuple(range(values.ndim - ndim_spatial, values.ndim))
    spec = np.fft.fftn(values, axes=axes, norm="forward")
    return extract_coeffs(spec, trunc_dims, ndim_spatial)


def to_spatial(f: BandlimitedField, grid_dims=None) -> np.ndarray:
    """Full-resolution real vector field, shape (d, *grid_dims)."""
    dims = tuple(grid_dims) if grid_dims is not None else f.grid_dims
    return coeffs_to_spatial(f.coeffs, dims, f.d)


def to_bandlimited(values: np.ndarray, trunc_dims, grid_dims=None) -> BandlimitedField:
    """Project a spatial vector field (d, *grid) onto a bandlimited field."""
    values = np.asarray(values, dtype=np.float64)
    d = values.shape[0]
    if values.ndim != d + 1:
        raise ValueError("expected shape (d, *grid_dims)")
    dims = tuple(grid_dims) if grid_dims is not None else values.shape[1:]
    return BandlimitedField(spatial_to_coeffs(values, trunc_dims, d), dims)
