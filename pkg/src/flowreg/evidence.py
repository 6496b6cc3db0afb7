"""Marginal-likelihood machinery for selecting the smoothness parameter.

The joint optimum over (v0, alpha) is a poor alpha estimator on piecewise
constant images: velocity components that slide along intensity level sets
leave the data untouched, the optimizer zeroes them, and the missing power
is then misread as extra smoothness.  Integrating v0 out fixes this.  We
use a Laplace (Gauss-Newton) approximation of the marginal likelihood
around the current registration: the curvature of the data term is taken
as H = B^T B where B is the Jacobian of the deformed source image with
respect to the initial-velocity coefficients, and alpha is chosen by a
grid scan of the approximate negative log marginal.

Everything here works in a real coordinate basis of the coefficient
window (per component: the DC mode, then a cosine/sine pair for each
retained frequency with its conjugate partner), which keeps the linear
algebra real-symmetric.
"""

from __future__ import annotations

import numpy as np

from .algebra import epdiff_rhs_tangent_batch, transport_rhs_tangent_batch
from .fields import BandlimitedField, coeffs_to_spatial, to_spatial
from .operators import SpectralOperator
from .shooting import BlowUpError, shoot
from .warping import jacobian_determinant_map, warp_image_with_gradient


class DofBasis:
    """Real degree-of-freedom basis for Hermitian coefficient windows.

    Enumerates, per vector component, the DC mode and one representative
    of each +/-k conjugate pair (structurally-zero Nyquist rows excluded).
    A paired dof carries prior weight 2 because it stands for two complex
    window cells; the DC dof carries weight 1.
    """

    def __init__(self, trunc_dims, d):
        self.trunc_dims = tuple(trunc_dims)
        self.d = d
        freqs = [np.arange(t) - t // 2 for t in trunc_dims]
        index = {k: i for i, k in enumerate(freqs[0])}
        half = []
        seen = set()
        for k in np.ndindex(*[len(f) for f in freqs]):
            kk = tuple(int(f[i]) for f, i in zip(freqs, k))
            if any(ki == -t // 2 for ki, t in zip(kk, trunc_dims)):
                continue  # unpaired Nyquist rows are pinned to zero
            if kk == (0,) * len(kk) or tuple(-x for x in kk) in seen:
                continue
            seen.add(kk)
            half.append(kk)
        self._index = index
        self._half = half

        def lap_of(kk):
            return float(
                sum(-2.0 * (np.cos(2.0 * np.pi * ki / t) - 1.0) for ki, t in zip(kk, trunc_dims))
            )

        per_comp = 1 + 2 * len(half)
        self.size = d * per_comp
        self.pair_weight = np.tile([1.0] + [2.0] * (2 * len(half)), d)
        self.laplacian = np.tile([0.0] + [x for kk in half for x in (lap_of(kk), lap_of(kk))], d)

    def basis_fields(self):
        """Unit perturbations as complex coefficient arrays, dof order."""
        if getattr(self, "_basis_cache", None) is not None:
            return self._basis_cache
        idx = self._index
        out = []
        for i in range(self.d):
            c = np.zeros((self.d, *self.trunc_dims), np.complex128)
            c[(i,) + tuple(idx[0] for _ in self.trunc_dims)] = 1.0
            out.append(c)
            for kk in self._half:
                pos = (i,) + tuple(idx[x] for x in kk)
                neg = (i,) + tuple(idx[-x] for x in kk)
                c = np.zeros((self.d, *self.trunc_dims), np.complex128)
                c[pos] = 1.0
                c[neg] = 1.0
                out.append(c)  # cosine dof
                c = np.zeros((self.d, *self.trunc_dims), np.complex128)
                c[pos] = 1.0j
                c[neg] = -1.0j
                out.append(c)  # sine dof
        self._basis_cache = out
        return out

    def to_dof(self, v: BandlimitedField) -> np.ndarray:
        idx = self._index
        out = np.empty(self.size)
        j = 0
        for i in range(self.d):
            out[j] = v.coeffs[(i,) + tuple(idx[0] for _ in self.trunc_dims)].real
            j += 1
            for kk in self._half:
                c = v.coeffs[(i,) + tuple(idx[x] for x in kk)]
                out[j] = c.real
                out[j + 1] = c.imag
                j += 2
        return out

    def to_field(self, x: np.ndarray, grid_dims) -> BandlimitedField:
        idx = self._index
        coeffs = np.zeros((self.d, *self.trunc_dims), np.complex128)
        j = 0
        for i in range(self.d):
            coeffs[(i,) + tuple(idx[0] for _ in self.trunc_dims)] = x[j]
            j += 1
            for kk in self._half:
                c = x[j] + 1.0j * x[j + 1]
                coeffs[(i,) + tuple(idx[x] for x in kk)] = c
                coeffs[(i,) + tuple(idx[-x] for x in kk)] = np.conj(c)
                j += 2
        return BandlimitedField(coeffs, tuple(grid_dims))

    def prior_precision(self, alpha: float, power: int = 3) -> np.ndarray:
        """Diagonal prior precision of the dof vector."""
        return self.pair_weight * (alpha * self.laplacian + 1.0) ** power


def deformation_jacobian(S, v0, op, cfg, basis, path=None):
    """Columns: sensitivity of the deformed source to each velocity dof.

    Exact forward-mode linearization: the geodesic-evolution and the
    inverse-map-transport recursions are differentiated step by step and
    all dof directions are propagated together through batched padded
    FFTs, then chained through the sampler gradient of the warp.  Rows
    are scaled by 1/sigma so B^T B is the data-term curvature.
    Returns (B, deformed image at v0).
    """
    if path is None:
        path = shoot(v0, op, cfg.integrator())
    w0, g = warp_image_with_gradient(S, to_spatial(path.displacement))

    dt = 1.0 / path.n_steps
    dv = np.stack(basis.basis_fields())  # (B, d, *trunc)
    du = np.zeros_like(dv)
    for k in range(path.n_steps):
        vk, uk = path.velocities[k], path.displacements[k]
        du = du + dt * transport_rhs_tangent_batch(uk, vk, du, dv)
        dv = dv + dt * epdiff_rhs_tangent_batch(vk, dv, op)

    # chain through the sampler: dw = sum_i grad_i * du1_i, in chunks to
    # bound the full-resolution intermediate
    n = du.shape[0]
    B = np.empty((int(np.prod(S.shape)), n))
    for lo in range(0, n, 64):
        du_sp = coeffs_to_spatial(du[lo : lo + 64], S.shape, basis.d)
        B[:, lo : lo + 64] = np.einsum("i...,bi...->b...", g, du_sp).reshape(du_sp.shape[0], -1).T
    return B / cfg.sigma, w0


def deformation_jacobian_fd(S, v0, op, cfg, basis, fd_step=1e-3):
    """Finite-difference reference for deformation_jacobian (slow)."""
    icfg = cfg.integrator()
    w0, _ = warp_image_with_gradient(S, to_spatial(shoot(v0, op, icfg).displacement))
    cols = []
    for bc in basis.basis_fields():
        up = shoot(v0.with_coeffs(v0.coeffs + fd_step * bc), op, icfg).displacement
        wp, _ = warp_image_with_gradient(S, to_spatial(up))
        cols.append(((wp - w0) / fd_step).ravel())
    return np.stack(cols, axis=1) / cfg.sigma, w0


def refine_v0(S, T, v0, alpha, cfg, basis, energy_fn, max_linearizations=3, det_floor=0.05):
    """Damped Gauss-Newton polish of the registration at fixed alpha.

    Relinearizes the deformed image around the current v0 and solves the
    regularized normal equations; the damping factor adapts on accept or
    reject of the full objective.  Steps that fold the deformation (min
    Jacobian determinant at or below det_floor) are rejected like energy
    increases: the large trial steps taken here are the main source of
    folding.  Returns (v0, energy, B, deformed) with B evaluated at the
    returned v0, ready for reuse by the alpha scan.
    """
    P = basis.prior_precision(alpha)
    op = SpectralOperator.build(alpha, v0.trunc_dims)
    energy = energy_fn(v0, alpha)
    damping = 1.0
    B = w0 = None
    stale = True
    for _ in range(max_linearizations):
        B, w0 = deformation_jacobian(S, v0, op, cfg, basis)
        stale = False
        H = B.T @ B
        resid = ((w0 - T) / cfg.sigma).ravel()
        dof = basis.to_dof(v0)
        grad = P * dof + B.T @ resid
        h_diag = np.diag(H)
        accepted = False
        for _ in range(12):
            C = H + np.diag(P * (1.0 + damping) + damping * h_diag)
            delta = -np.linalg.solve(C, grad)
            v0_prop = basis.to_field(dof + delta, v0.grid_dims)
            try:
                e_prop = energy_fn(v0_prop, alpha)
            except BlowUpError:
                damping *= 4.0
                continue
            if np.isfinite(e_prop) and e_prop < energy:
                u_prop = shoot(v0_prop, op, cfg.integrator()).displacement
                if jacobian_determinant_map(u_prop).min() <= det_floor:
                    damping *= 4.0
                    continue
                v0, energy = v0_prop, e_prop
                damping = max(damping / 4.0, 1e-4)
                accepted = True
                stale = True
                break
            damping *= 4.0
        if not accepted:
            break
    if stale or B is None:
        B, w0 = deformation_jacobian(S, v0, op, cfg, basis)
    return v0, energy, B, w0


def evidence_scan(dof, H, data_grad, alpha_grid, basis):
    """Approximate negative log marginal likelihood over an alpha grid.

    For each candidate the alpha-dependent terms are the prior quadratic,
    the prior and posterior log-determinants, and a quadratic correction
    -(1/2) b^T (P+H)^{-1} b with b the full-objective gradient in the dof
    basis; in the linear-Gaussian limit this is the exact marginal.
    Returns (best alpha, values).
    """
    values = np.empty(len(alpha_grid))
    for i, alpha in enumerate(alpha_grid):
        P = basis.prior_precision(alpha)
        b = P * dof + data_grad
        chol = np.linalg.cholesky(H + np.diag(P))
        y = np.linalg.solve(chol, b)
        values[i] = (
            0.5 * float(np.sum(P * dof * dof))
            - 0.5 * float(np.sum(np.log(P)))
            + float(np.sum(np.log(np.diag(chol))))
            - 0.5 * float(y @ y)
        )
    best = int(np.argmin(values))
    return float(alpha_grid[best]), values
