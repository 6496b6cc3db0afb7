"""Diagonal spectral symbols: Laplacian, smoothing pair, central differences.

All symbols live on the centered truncated window with normalized
frequencies xi_j = k_j / n_j, where n_j is the truncation size of axis j
(unit spacing on the low-dimensional torus grid).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import grids
from .fields import BandlimitedField


def laplacian_symbol(trunc_dims) -> np.ndarray:
    """Negative discrete Laplacian symbol -2 sum_j (cos(2 pi xi_j) - 1).

    Nonnegative everywhere and exactly zero at zero frequency.
    """
    return _laplacian_symbol(tuple(int(n) for n in trunc_dims))


@lru_cache(maxsize=None)
def _laplacian_symbol(trunc_dims: tuple) -> np.ndarray:
    for n in trunc_dims:
        if n < 2:
            raise ValueError("each truncation axis must have size >= 2")
    out = np.zeros(trunc_dims)
    for ax, n in enumerate(trunc_dims):
        xi = grids.axis_freqs(n) / n
        term = -2.0 * (np.cos(2.0 * np.pi * xi) - 1.0)
        shape = [1] * len(trunc_dims)
        shape[ax] = n
        out = out + term.reshape(shape)
    out.setflags(write=False)
    return out


def derivative_symbols(trunc_dims) -> tuple:
    """Central-difference symbols i*sin(2 pi xi_j), one full-window array per axis."""
    return _derivative_symbols(tuple(int(n) for n in trunc_dims))


@lru_cache(maxsize=None)
def _derivative_symbols(trunc_dims: tuple) -> tuple:
    syms = []
    for ax, n in enumerate(trunc_dims):
        xi = grids.axis_freqs(n) / n
        term = 1j * np.sin(2.0 * np.pi * xi)
        shape = [1] * len(trunc_dims)
        shape[ax] = n
        arr = np.broadcast_to(term.reshape(shape), trunc_dims).copy()
        arr.setflags(write=False)
        syms.append(arr)
    return tuple(syms)


@dataclass(frozen=True)
class SpectralOperator:
    """Precomputed diagonal symbols for one (alpha, window) configuration."""

    alpha: float
    trunc_dims: tuple
    power: int = 3
    laplacian: np.ndarray = field(repr=False, default=None)
    l_symbol: np.ndarray = field(repr=False, default=None)
    k_symbol: np.ndarray = field(repr=False, default=None)
    deriv: tuple = field(repr=False, default=None)

    @classmethod
    def build(cls, alpha: float, trunc_dims, power: int = 3) -> "SpectralOperator":
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        trunc_dims = tuple(int(n) for n in trunc_dims)
        lap = laplacian_symbol(trunc_dims)
        lsym = (alpha * lap + 1.0) ** power
        return cls(
            alpha=float(alpha),
            trunc_dims=trunc_dims,
            power=power,
            laplacian=lap,
            l_symbol=lsym,
            k_symbol=1.0 / lsym,
            deriv=tuple(derivative_symbols(trunc_dims)),
        )

    def with_alpha(self, alpha: float) -> "SpectralOperator":
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        lsym = (alpha * self.laplacian + 1.0) ** self.power
        return SpectralOperator(
            alpha=float(alpha),
            trunc_dims=self.trunc_dims,
            power=self.power,
            laplacian=self.laplacian,
            l_symbol=lsym,
            k_symbol=1.0 / lsym,
            deriv=self.deriv,
        )


def apply_smoothing(op: SpectralOperator, f: BandlimitedField, direction: str) -> BandlimitedField:
    """Multiply each component by the L (sharpen) or K (smooth) symbol."""
    if op.trunc_dims != f.trunc_dims:
        raise ValueError("operator and field windows differ")
    if direction == "L":
        sym = op.l_symbol
    elif direction == "K":
        sym = op.k_symbol
    else:
        raise ValueError("direction must be 'L' or 'K'")
    return f.with_coeffs(f.coeffs * sym)
