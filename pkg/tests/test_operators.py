import numpy as np
import pytest

from flowreg.operators import (
    SpectralOperator,
    apply_smoothing,
    derivative_symbols,
    laplacian_symbol,
)

from conftest import random_hermitian_field


def test_laplacian_symbol_values():
    lap = laplacian_symbol((8, 8))
    assert lap[4, 4] == 0.0  # zero frequency
    assert np.all(lap >= 0)
    # single-axis frequency k: -2(cos(2 pi k/8) - 1)
    k = 3
    expect = -2.0 * (np.cos(2.0 * np.pi * k / 8) - 1.0)
    assert np.isclose(lap[4 + k, 4], expect)
    assert np.isclose(lap[4, 4 + k], expect)


def test_laplacian_symbol_separable():
    lap = laplacian_symbol((6, 10))
    lx = laplacian_symbol((6, 2))[:, 1]  # second axis at zero frequency
    ly = laplacian_symbol((2, 10))[1, :]
    assert np.allclose(lap, lx[:, None] + ly[None, :])


def test_smoothing_pair_inverse(rng):
    op = SpectralOperator.build(4.0, (8, 8))
    f = random_hermitian_field((8, 8), (16, 16), rng)
    roundtrip = apply_smoothing(op, apply_smoothing(op, f, "L"), "K")
    assert np.max(np.abs(roundtrip.coeffs - f.coeffs)) < 1e-12


def test_l_symbol_definition():
    alpha, power = 2.5, 3
    op = SpectralOperator.build(alpha, (6, 6), power=power)
    assert np.allclose(op.l_symbol, (alpha * op.laplacian + 1.0) ** power)
    assert np.allclose(op.k_symbol * op.l_symbol, 1.0)


def test_with_alpha_consistency():
    op = SpectralOperator.build(1.0, (8, 8))
    op2 = op.with_alpha(7.0)
    ref = SpectralOperator.build(7.0, (8, 8))
    assert np.allclose(op2.l_symbol, ref.l_symbol)
    assert op2.alpha == 7.0


def test_derivative_symbol_on_plane_wave():
    # d/dx of cos(2 pi k x / n) sampled on the grid, via the central
    # difference symbol i sin(2 pi k / n)
    n, k = 16, 3
    x = np.arange(n)
    sig = np.cos(2.0 * np.pi * k * x / n)
    spec = np.fft.fft(sig, norm="forward")
    dsym = derivative_symbols((n,))[0]
    centered = np.fft.fftshift(spec)
    dsig = np.fft.ifft(np.fft.ifftshift(centered * dsym), norm="forward").real
    expect = 0.5 * (np.roll(sig, -1) - np.roll(sig, 1))
    assert np.max(np.abs(dsig - expect)) < 1e-12


def test_negative_alpha_rejected():
    with pytest.raises(ValueError):
        SpectralOperator.build(-1.0, (8, 8))
