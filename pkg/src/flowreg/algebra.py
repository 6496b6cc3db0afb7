"""Anti-aliased truncated products and the (negative) Jacobi-Lie bracket pair.

Quadratic terms are evaluated by zero-padding the window to twice its size
per axis, multiplying in the spatial domain, transforming back, and
truncating.  With 2x padding the circular convolution of two windows is
alias-free, so the result equals the direct summation
``out[k] = sum_m a[m] b[k-m]`` over the window support.
"""

from __future__ import annotations

import numpy as np

from .fields import BandlimitedField, embed_coeffs, extract_coeffs
from .operators import SpectralOperator, derivative_symbols


def _pad_dims(trunc_dims):
    return tuple(2 * n for n in trunc_dims)


def _spatial(coeffs: np.ndarray, ndim: int) -> np.ndarray:
    """Complex spatial rendering on the doubled grid (leading axes allowed)."""
    full = embed_coeffs(coeffs, _pad_dims(coeffs.shape[-ndim:]), ndim)
    axes = tuple(range(full.ndim - ndim, full.ndim))
    return np.fft.ifftn(full, axes=axes, norm="forward")


def _gather(spatial: np.ndarray, trunc_dims, ndim: int) -> np.ndarray:
    axes = tuple(range(spatial.ndim - ndim, spatial.ndim))
    spec = np.fft.fftn(spatial, axes=axes, norm="forward")
    return extract_coeffs(spec, trunc_dims, ndim)


def spectral_product(a: np.ndarray, b: np.ndarray, mode: str, ndim: int) -> np.ndarray:
    """Truncated convolution (mode 'convolve') or correlation ('correlate').

    Operates on centered window arrays sharing the trailing ``ndim`` axes;
    leading axes broadcast elementwise.
    """
    if a.shape[-ndim:] != b.shape[-ndim:]:
        raise ValueError("window shapes differ")
    a_sp = _spatial(np.asarray(a, dtype=np.complex128), ndim)
    b_sp = _spatial(np.asarray(b, dtype=np.complex128), ndim)
    if mode == "convolve":
        prod = a_sp * b_sp
    elif mode == "correlate":
        prod = np.conj(a_sp) * b_sp
    else:
        raise ValueError("mode must be 'convolve' or 'correlate'")
    return _gather(prod, a.shape[-ndim:], ndim)


def truncated_convolution(a: BandlimitedField, b: BandlimitedField, mode: str = "convolve") -> BandlimitedField:
    """Componentwise truncated product of two fields on one window."""
    if a.trunc_dims != b.trunc_dims:
        raise ValueError("fields live on different windows")
    return a.with_coeffs(spectral_product(a.coeffs, b.coeffs, mode, a.d))


def jacobian_and_divergence(f: BandlimitedField):
    """Central-difference Jacobian coefficients and divergence.

    Returns (jac, div): jac[i, j] holds the window coefficients of
    d f_i / d x_j, div is the scalar window sum_j d f_j / d x_j.
    """
    deriv = derivative_symbols(f.trunc_dims)
    d = f.d
    jac = np.empty((d, d, *f.trunc_dims), dtype=np.complex128)
    for j in range(d):
        jac[:, j] = f.coeffs * deriv[j]
    div = sum(jac[j, j] for j in range(d))
    return jac, np.asarray(div)


def _jac_spatial(f: BandlimitedField) -> np.ndarray:
    """Real padded-spatial renderings of all d^2 central-difference derivatives."""
    d = f.d
    deriv = derivative_symbols(f.trunc_dims)
    stack = np.empty((d, d, *f.trunc_dims), dtype=np.complex128)
    for j in range(d):
        stack[:, j] = f.coeffs * deriv[j]
    return _spatial(stack, d).real


def ad_bracket(v: BandlimitedField, w: BandlimitedField) -> BandlimitedField:
    """Negative Jacobi-Lie bracket: Dv * w - Dw * v (truncated convolutions)."""
    if v.trunc_dims != w.trunc_dims:
        raise ValueError("fields live on different windows")
    d = v.d
    dv = _jac_spatial(v)
    dw = _jac_spatial(w)
    v_sp = _spatial(v.coeffs, d).real
    w_sp = _spatial(w.coeffs, d).real
    prod = np.einsum("ij...,j...->i...", dv, w_sp) - np.einsum("ij...,j...->i...", dw, v_sp)
    return v.with_coeffs(_gather(prod, v.trunc_dims, d))


def transport_adjoint_u(v: BandlimitedField, lam: BandlimitedField) -> BandlimitedField:
    """Transpose in u of the transport nonlinearity G(u, v) = Du * v.

    (G_u^T lam)_i = -sum_j d_j corr(v_j, lam_i); with Hermitian inputs the
    correlation reduces to the plain spatial product.
    """
    d = v.d
    deriv = derivative_symbols(v.trunc_dims)
    v_sp = _spatial(v.coeffs, d).real
    lam_sp = _spatial(lam.coeffs, d).real
    out = np.zeros_like(lam.coeffs)
    for j in range(d):
        out -= deriv[j] * _gather(v_sp[j] * lam_sp, v.trunc_dims, d)
    return lam.with_coeffs(out)


def transport_adjoint_v(u: BandlimitedField, lam: BandlimitedField) -> BandlimitedField:
    """Transpose in v of G(u, v) = Du * v: (G_v^T lam)_j = sum_i corr(d_j u_i, lam_i)."""
    d = u.d
    du = _jac_spatial(u)
    lam_sp = _spatial(lam.coeffs, d).real
    prod = np.einsum("ij...,i...->j...", du, lam_sp)
    return lam.with_coeffs(_gather(prod, u.trunc_dims, d))


def epdiff_jacobian_adjoint(v: BandlimitedField, mu: BandlimitedField, op: SpectralOperator) -> BandlimitedField:
    """Transpose of the EPDiff right-hand-side Jacobian at v applied to mu.

    F(v) = ad^dagger(v, v); this returns (dF/dv)^T mu, the piece the exact
    discrete adjoint of the Euler recursion needs.
    """
    d = v.d
    deriv = derivative_symbols(v.trunc_dims)
    nu_c = -op.k_symbol * mu.coeffs
    nu_sp = _spatial(nu_c, d).real
    v_sp = _spatial(v.coeffs, d).real
    lv = op.l_symbol * v.coeffs
    lv_sp = _spatial(lv, d).real
    dnu_sp = _spatial(np.stack([deriv[m] * nu_c for m in range(d)], axis=1), d).real  # (d, m, ...)
    dv = _jac_spatial(v)

    out = np.zeros_like(mu.coeffs)
    # slot-one transposes of ad^dagger(.)
    for i in range(d):
        acc = np.zeros(v.trunc_dims, dtype=np.complex128)
        for j in range(d):
            acc -= deriv[j] * _gather(nu_sp[j] * lv_sp[i], v.trunc_dims, d)  # (Dx)^T-corr piece
        for j in range(d):
            acc -= _gather(lv_sp[j] * dnu_sp[j, i], v.trunc_dims, d)  # divergence piece
        out[i] += acc
    # slot-two transposes of ad^dagger(v, .)
    for i in range(d):
        acc = np.zeros(v.trunc_dims, dtype=np.complex128)
        for j in range(d):
            acc += _gather(nu_sp[j] * dv[i, j], v.trunc_dims, d)
        out[i] += op.l_symbol * acc
    for j in range(d):
        acc = np.zeros(v.trunc_dims, dtype=np.complex128)
        for m in range(d):
            acc -= _gather(v_sp[m] * dnu_sp[j, m], v.trunc_dims, d)
        out[j] += op.l_symbol * acc
    return mu.with_coeffs(out)


def epdiff_rhs_tangent_batch(v: BandlimitedField, delta: np.ndarray, op: SpectralOperator) -> np.ndarray:
    """Directional derivative of F(v) = ad^dagger(v, v) for a batch of directions.

    ``delta`` has shape (B, d, *trunc_dims); returns the same shape holding
    F'(v)[delta_b] = ad^dagger(delta_b, v) + ad^dagger(v, delta_b) per row.
    All quadratic terms run through batched padded FFTs, so the cost is a
    handful of transforms regardless of B.
    """
    d = v.d
    deriv = derivative_symbols(v.trunc_dims)
    dstack = np.stack(deriv)

    v_sp = _spatial(v.coeffs, d).real
    dv = _jac_spatial(v)
    lv_sp = _spatial(op.l_symbol * v.coeffs, d).real

    delta_sp = _spatial(delta, d).real
    # (B, d, d, pad...): row b, component i, derivative axis j
    ddelta = _spatial(delta[:, :, None] * dstack[None, None], d).real
    ldelta_sp = _spatial(op.l_symbol * delta, d).real

    pad_shape = delta_sp.shape[:1] + delta_sp.shape[1:]
    term1 = np.zeros(pad_shape, dtype=np.float64)
    for j in range(d):
        for i in range(d):
            term1[:, j] += ddelta[:, i, j] * lv_sp[i] + dv[i, j] * ldelta_sp[:, i]
    out = _gather(term1, v.trunc_dims, d)

    for i in range(d):
        acc = np.zeros((delta.shape[0], *v.trunc_dims), dtype=np.complex128)
        for j in range(d):
            outer = _gather(lv_sp[i] * delta_sp[:, j] + ldelta_sp[:, i] * v_sp[j], v.trunc_dims, d)
            acc += outer * deriv[j]
        out[:, i] += acc
    return -op.k_symbol * out


def transport_rhs_tangent_batch(
    u: BandlimitedField, v: BandlimitedField, du_b: np.ndarray, delta: np.ndarray
) -> np.ndarray:
    """Directional derivative of the transport right-hand side -v - Du * v.

    ``du_b`` and ``delta`` are batches of displacement and velocity
    directions, shape (B, d, *trunc_dims); returns
    -delta_b - D(du_b) * v - Du * delta_b per row.
    """
    d = u.d
    deriv = derivative_symbols(u.trunc_dims)
    dstack = np.stack(deriv)
    v_sp = _spatial(v.coeffs, d).real
    du = _jac_spatial(u)
    delta_sp = _spatial(delta, d).real
    ddu = _spatial(du_b[:, :, None] * dstack[None, None], d).real

    prod = np.zeros(delta_sp.shape, dtype=np.float64)
    for i in range(d):
        for j in range(d):
            prod[:, i] += ddu[:, i, j] * v_sp[j] + du[i, j] * delta_sp[:, j]
    return -delta - _gather(prod, u.trunc_dims, d)


def ad_dagger(v: BandlimitedField, w: BandlimitedField, op: SpectralOperator) -> BandlimitedField:
    """Metric adjoint of the bracket: -K[(Dv)^T (*) Lw + div(Lw (x) v)]."""
    if v.trunc_dims != w.trunc_dims or op.trunc_dims != v.trunc_dims:
        raise ValueError("fields and operator live on different windows")
    d = v.d
    dv = _jac_spatial(v)
    lw = op.l_symbol * w.coeffs
    lw_sp = _spatial(lw, d).real
    v_sp = _spatial(v.coeffs, d).real
    # (Dv)^T correlated against Lw; real spatial fields make the correlation
    # coincide with plain convolution.
    term1 = _gather(np.einsum("ij...,i...->j...", dv, lw_sp), v.trunc_dims, d)
    # divergence of the outer product Lw (x) v, derivative applied after
    # truncation (diagonal symbols commute with the window crop)
    outer = _gather(np.einsum("i...,j...->ij...", lw_sp, v_sp), v.trunc_dims, d)
    term2 = np.zeros_like(term1)
    for j in range(d):
        term2 += outer[:, j] * op.deriv[j]
    return v.with_coeffs(-op.k_symbol * (term1 + term2))
