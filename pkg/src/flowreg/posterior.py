"""Negative log posterior in the truncated space, its gradients, and the
alternating MAP loop over (alpha, v0).

Conventions fixed here and relied on by the tests:
  * inner products on coefficient vectors are the real part of the
    Hermitian pairing, summed over components and the full window;
  * ln|L| sums 3*ln(alpha*A+1) over every free window frequency and every
    vector component (structurally-zero unpaired rows are excluded), so
    the value, its alpha-derivative, and the prior sampler describe the
    same Gaussian;
  * gradients with respect to v0 are Sobolev (K-preconditioned), so the
    prior term contributes v0 itself and the data term arrives through
    the backward adjoint sweep.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import grids
from .algebra import epdiff_jacobian_adjoint, transport_adjoint_u, transport_adjoint_v
from .fields import (
    BandlimitedField,
    spatial_to_coeffs,
    to_spatial,
    validate_image,
)
from .operators import SpectralOperator
from .shooting import (
    BlowUpError,
    GeodesicPath,
    IntegratorConfig,
    shoot,
)
from .warping import jacobian_determinant_map, warp_image_with_gradient

log = logging.getLogger(__name__)

GRAD_THRESHOLD_SQ = 1e-6
ALPHA_FLOOR = 1e-6


@dataclass(frozen=True)
class PosteriorConfig:
    sigma: float = 0.03
    alpha_init: float = 1.0
    eps: float = 5e-2
    tau: float = 1e-2
    max_iters: int = 200
    stop_rate: float = 1e-6
    q_min: int = 30
    n_steps: int = 10
    trunc_dim: int = 16
    # Gauss-Newton polish after descent; disable for very large windows
    # where the dense dof-basis linear algebra is not worth it
    polish: bool = True

    def __post_init__(self):
        if min(self.sigma, self.alpha_init, self.eps, self.tau) <= 0:
            raise ValueError("sigma, alpha_init, eps, tau must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    @property
    def gamma(self) -> float:
        """Distance weight; identified with 1/sigma^2."""
        return 1.0 / self.sigma**2

    def trunc_dims(self, d: int) -> tuple:
        return (self.trunc_dim,) * d

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(n_steps=self.n_steps)


@dataclass
class MapResult:
    alpha_opt: float
    v0: BandlimitedField
    energy_trace: list
    alpha_trace: list
    grad_alpha_trace: list
    grad_v0_trace: list
    iterations_run: int
    converged: bool
    displacement: BandlimitedField = None
    deformed: np.ndarray = None


def _half_logdet(alpha: float, op: SpectralOperator) -> float:
    mask = grids.nyquist_free_mask(op.trunc_dims)
    d = len(op.trunc_dims)
    return 0.5 * op.power * d * float(np.log(alpha * op.laplacian[mask] + 1.0).sum())


def prior_energy(v0: BandlimitedField, op: SpectralOperator) -> float:
    return 0.5 * float(np.sum(op.l_symbol * np.abs(v0.coeffs) ** 2))


def log_posterior(
    v0: BandlimitedField,
    S: np.ndarray,
    T: np.ndarray,
    alpha: float,
    cfg: PosteriorConfig,
    path: GeodesicPath = None,
) -> float:
    """Value of the negative log posterior.

    When ``path`` is given the deformation is taken as already observed
    (the likelihood is conditionally independent of alpha), which is the
    reading under which the alpha-gradient matches finite differences.
    """
    S = validate_image(S)
    T = validate_image(T)
    op = SpectralOperator.build(alpha, v0.trunc_dims)
    if path is None:
        path = shoot(v0, op, cfg.integrator())
    warped, _ = warp_image_with_gradient(S, to_spatial(path.displacement))
    resid = warped - T
    M = float(S.size)
    data = float(np.sum(resid**2)) / (2.0 * cfg.sigma**2)
    const = 2.0 * M * np.log(cfg.sigma) + M * np.log(2.0 * np.pi)
    return prior_energy(v0, op) + data - _half_logdet(alpha, op) + const


def grad_alpha(v0: BandlimitedField, alpha: float, op: SpectralOperator) -> float:
    """d/d alpha of the alpha-dependent posterior terms (prior + log-det)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    lap = op.laplacian
    quad = float(np.sum((alpha * lap + 1.0) ** 2 * lap * np.abs(v0.coeffs) ** 2))
    mask = grids.nyquist_free_mask(op.trunc_dims)
    d = len(op.trunc_dims)
    prior_pull = d * float((lap[mask] / (alpha * lap[mask] + 1.0)).sum())
    return 1.5 * (quad - prior_pull)


def grad_v1(S: np.ndarray, T: np.ndarray, path: GeodesicPath, op: SpectralOperator, cfg: PosteriorConfig):
    """t=1 data gradient: residual times the exact sampler derivative,
    projected to the window and K-smoothed.  Returns (field, deformed image).
    """
    u = path.displacement
    if tuple(S.shape) != tuple(u.grid_dims):
        raise ValueError("image dims do not match the displacement grid")
    warped, g = warp_image_with_gradient(S, to_spatial(u))
    resid = (warped - T) / cfg.sigma**2
    force = resid[None] * g
    M = float(S.size)
    coeffs = M * spatial_to_coeffs(force, u.trunc_dims, u.d)
    # sign: du/dt = -v at leading order, so pushing v along the image force
    # decreases the residual; verified against finite differences
    vhat1 = u.with_coeffs(-op.k_symbol * coeffs)
    return vhat1, warped


def backward_adjoint_sweep(
    path: GeodesicPath,
    vhat1: BandlimitedField,
    op: SpectralOperator,
    cfg: PosteriorConfig,
) -> BandlimitedField:
    """Carry the t=1 data gradient back to t=0.

    Runs the exact transpose of the forward Euler recursions (EPDiff step
    and inverse-map transport), so the returned Sobolev gradient matches
    finite differences of the discrete objective to truncation error.
    lam tracks sensitivity to the displacement nodes, mu to the velocity
    nodes; both are carried in Euclidean coordinates and the K smoothing
    is applied once at the end.
    """
    dt = 1.0 / path.n_steps
    # vhat1 is the K-smoothed t=1 gradient; undo the smoothing to seed lam
    lam = vhat1.with_coeffs(-op.l_symbol * vhat1.coeffs)
    mu = BandlimitedField.zeros(vhat1.trunc_dims, vhat1.grid_dims)
    for k in range(path.n_steps - 1, -1, -1):
        v = path.velocities[k]
        u = path.displacements[k]
        mu = (
            mu
            + dt * epdiff_jacobian_adjoint(v, mu, op)
            - dt * lam
            - dt * transport_adjoint_v(u, lam)
        )
        lam = lam - dt * transport_adjoint_u(v, lam)
        if not (np.all(np.isfinite(lam.coeffs)) and np.all(np.isfinite(mu.coeffs))):
            raise BlowUpError(k, "adjoint")
    return mu.with_coeffs(op.k_symbol * mu.coeffs)


def grad_v0_total(
    v0: BandlimitedField,
    S: np.ndarray,
    T: np.ndarray,
    alpha: float,
    cfg: PosteriorConfig,
    path: GeodesicPath = None,
):
    """Sobolev gradient of the posterior in v0: v0 + vhat(0).

    Returns (gradient, deformed image, path).
    """
    op = SpectralOperator.build(alpha, v0.trunc_dims)
    if path is None:
        path = shoot(v0, op, cfg.integrator())
    vhat1, warped = grad_v1(S, T, path, op, cfg)
    vhat0 = backward_adjoint_sweep(path, vhat1, op, cfg)
    return v0 + vhat0, warped, path


def sample_prior(alpha: float, op: SpectralOperator, rng_seed, grid_dims) -> BandlimitedField:
    """Draw v0 ~ N(0, L^{-1}(alpha)): per-frequency complex variance
    (alpha*A+1)^{-power}, Hermitian by construction (real spatial field)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    if op.alpha != alpha:
        op = op.with_alpha(alpha)
    d = len(op.trunc_dims)
    n_total = int(np.prod(op.trunc_dims))
    noise = rng.standard_normal((d, *op.trunc_dims))
    axes = tuple(range(1, d + 1))
    white = np.fft.fftn(noise, axes=axes, norm="forward") * np.sqrt(n_total)
    coeffs = white * op.l_symbol ** (-0.5)
    grids.zero_nyquist(coeffs, d)
    return BandlimitedField(coeffs, tuple(grid_dims))


def _sq_norm(f: BandlimitedField) -> float:
    return float(np.sum(np.abs(f.coeffs) ** 2))


# Smoothness search schedule.  The marginal-likelihood scan is only
# trustworthy when evaluated at a fit whose regularization anchor sits at
# or above the answer: fits anchored below it carry rough local-minimum
# debris in v0 that drags the scan low, and iterating scan -> refit to a
# fixed point converges to that biased value.  Empirically the scan value
# as a function of the fit anchor peaks near the true smoothness, so the
# estimate is the larger of the scans taken at two descending probe
# anchors.  Small answers sit below the probes' resolving range; when the
# probe estimate is small the search continues with trust-clamped
# scan/refit rounds from that point instead.
ALPHA_PROBE_ANCHORS = (64.0, 24.0)
ALPHA_CONTINUE_BELOW = 4.5
ALPHA_TRUST_FACTOR = 2.5
ALPHA_STOP_REL = 0.05
ALPHA_GRID = (0.05, 200.0, 86)
MAX_ALPHA_ROUNDS = 6


def _descend_v0(S, T, v0, alpha, op, cfg, max_iters, energy, trace, callback=None):
    """Preconditioned descent on the registration term at fixed alpha.

    The Sobolev gradient is re-weighted by (L + h)^-1 L, h the constant
    Gauss-Newton curvature estimate sum |grad S|^2 / (2 sigma^2), which
    equalizes convergence across the window; a backtracking line search
    on the full objective keeps every accepted step non-increasing.
    Returns (v0, energy, accepted iterations, last gradient norm).
    """
    icfg = cfg.integrator()
    g_img = np.stack(np.gradient(S))
    h_const = float(np.sum(g_img**2)) / (2.0 * cfg.sigma**2)
    step = cfg.eps
    accepted = 0
    gv_norm = 0.0
    small = 0
    for it in range(max_iters):
        try:
            path = shoot(v0, op, icfg)
            vhat1, _ = grad_v1(S, T, path, op, cfg)
            gv = v0 + backward_adjoint_sweep(path, vhat1, op, cfg)
        except BlowUpError:
            break
        gv_norm = np.sqrt(_sq_norm(gv))
        if gv_norm**2 <= GRAD_THRESHOLD_SQ:
            break
        direction = gv.with_coeffs(op.l_symbol / (op.l_symbol + h_const) * gv.coeffs)
        improved = False
        for _ in range(16):
            v0_prop = v0 + (-step) * direction
            try:
                e_prop = log_posterior(v0_prop, S, T, alpha, cfg)
            except BlowUpError:
                step *= 0.5
                continue
            if np.isfinite(e_prop) and e_prop < energy:
                prev = energy
                v0, energy = v0_prop, e_prop
                trace.append(energy)
                accepted += 1
                step = min(step * 2.0, 1.0)
                improved = True
                if callback is not None:
                    callback(accepted, energy, alpha, 0.0, gv_norm)
                small = small + 1 if abs(prev - energy) < cfg.stop_rate * abs(energy) else 0
                break
            step *= 0.5
        if not improved or small >= cfg.q_min:
            break
    return v0, energy, accepted, gv_norm


def map_estimate(
    S: np.ndarray,
    T: np.ndarray,
    cfg: PosteriorConfig,
    fixed_alpha: float = None,
    callback=None,
) -> MapResult:
    """Register S to T; estimate the smoothness parameter unless fixed.

    With ``fixed_alpha`` this is plain registration: preconditioned
    descent plus a damped Gauss-Newton polish, every accepted step
    non-increasing in the posterior energy.

    Without it, alpha is chosen by an approximate marginal likelihood:
    the image pair is registered at two descending probe anchors, the
    alpha grid is scanned with the Gauss-Newton curvature of the data
    term at each fit, and the larger scan wins.  Small answers fall
    below the probes' resolving range, so a small probe estimate is
    refined by trust-clamped scan/refit rounds walking down from the
    smooth side until self-consistent.  The reported energy trace
    covers the accepted steps of the final round, i.e. the registration
    at the returned alpha.
    """
    from . import evidence

    S = validate_image(S)
    T = validate_image(T)
    if S.shape != T.shape:
        raise ValueError("source and target dims differ")
    d = S.ndim
    trunc = cfg.trunc_dims(d)
    icfg = cfg.integrator()

    def energy_fn(v, a):
        return log_posterior(v, S, T, a, cfg)

    estimating = fixed_alpha is None
    alpha = ALPHA_PROBE_ANCHORS[0] if estimating else float(fixed_alpha)
    if not estimating and alpha <= 0:
        raise ValueError("alpha must be positive")
    basis = evidence.DofBasis(trunc, d) if estimating or cfg.polish else None
    op = SpectralOperator.build(alpha, trunc)
    v0 = BandlimitedField.zeros(trunc, S.shape)
    energy = log_posterior(v0, S, T, alpha, cfg)

    alpha_trace = [alpha]
    ga_trace, gv_trace = [], []
    energy_trace = [energy]
    iterations = 0
    converged = False

    if estimating:
        grid = np.geomspace(*ALPHA_GRID[:2], int(ALPHA_GRID[2]))
        budget = cfg.max_iters

        def fit_and_scan(anchor, v_init, iters, trace):
            nonlocal budget, iterations
            opa = op.with_alpha(anchor)
            e = log_posterior(v_init, S, T, anchor, cfg)
            trace.append(e)
            v, e, used, gv_norm = _descend_v0(
                S, T, v_init, anchor, opa, cfg, min(iters, budget),
                e, trace, callback,
            )
            budget -= used
            iterations += used
            v, e, B, warped = evidence.refine_v0(
                S, T, v, anchor, cfg, basis, energy_fn, max_linearizations=2
            )
            trace.append(e)
            resid = ((warped - T) / cfg.sigma).ravel()
            scanned, _ = evidence.evidence_scan(
                basis.to_dof(v), B.T @ B, B.T @ resid, grid, basis
            )
            ga_trace.append(grad_alpha(v, anchor, opa))
            gv_trace.append(gv_norm)
            return v, scanned

        # probe fits, smoothest anchor first; the second warm-starts from
        # the first so it only needs a short descent
        scans = []
        for k, anchor in enumerate(ALPHA_PROBE_ANCHORS):
            round_trace = []
            v0, scanned = fit_and_scan(
                anchor, v0, 80 if k == 0 else 40, round_trace
            )
            scans.append(scanned)
            alpha_trace.append(anchor)
            energy_trace = round_trace
        alpha = float(max(scans))
        alpha_trace.append(alpha)
        converged = True

        if alpha < ALPHA_CONTINUE_BELOW:
            # small-alpha regime: walk down to a self-consistent anchor
            # with trust-clamped moves, approaching from the smooth side
            converged = False
            alpha = ALPHA_CONTINUE_BELOW
            for rnd in range(MAX_ALPHA_ROUNDS):
                round_trace = []
                v0, scanned = fit_and_scan(alpha, v0, 40, round_trace)
                lo = max(alpha / ALPHA_TRUST_FACTOR, ALPHA_FLOOR)
                alpha_new = float(np.clip(scanned, lo, alpha * ALPHA_TRUST_FACTOR))
                alpha_trace.append(alpha_new)
                energy_trace = round_trace
                moved = abs(alpha_new - alpha) / max(alpha, ALPHA_FLOOR)
                alpha = alpha_new
                if moved < ALPHA_STOP_REL:
                    converged = True
                    break
                if budget <= 0:
                    break
        else:
            # final registration at the chosen smoothness for reporting
            round_trace = []
            opa = op.with_alpha(alpha)
            energy = log_posterior(v0, S, T, alpha, cfg)
            round_trace.append(energy)
            v0, energy, used, gv_norm = _descend_v0(
                S, T, v0, alpha, opa, cfg, min(40, max(budget, 10)),
                energy, round_trace, callback,
            )
            iterations += used
            v0, energy, _, _ = evidence.refine_v0(
                S, T, v0, alpha, cfg, basis, energy_fn, max_linearizations=2
            )
            round_trace.append(energy)
            gv_trace.append(gv_norm)
            energy_trace = round_trace
        op = op.with_alpha(alpha)
        energy = log_posterior(v0, S, T, alpha, cfg)
    else:
        energy_trace = [energy]
        v0, energy, used, gv_norm = _descend_v0(
            S, T, v0, alpha, op, cfg, cfg.max_iters, energy, energy_trace, callback
        )
        iterations = used
        if cfg.polish:
            v0, energy, _, _ = evidence.refine_v0(
                S, T, v0, alpha, cfg, basis, energy_fn, max_linearizations=3
            )
            energy_trace.append(energy)
        ga_trace.append(grad_alpha(v0, alpha, op))
        gv_trace.append(gv_norm)
        converged = gv_norm**2 <= GRAD_THRESHOLD_SQ or used < cfg.max_iters

    op = op.with_alpha(alpha)
    final_path = shoot(v0, op, icfg)
    warped, _ = warp_image_with_gradient(S, to_spatial(final_path.displacement))
    min_det = float(jacobian_determinant_map(final_path.displacement).min())
    if min_det <= 0.05:
        # folded transformation: whatever the optimizer says, this is not
        # a usable diffeomorphic registration
        log.warning("final deformation folds (min det %.3f); flagging non-converged", min_det)
        converged = False
    return MapResult(
        alpha_opt=alpha,
        v0=v0,
        energy_trace=energy_trace,
        alpha_trace=alpha_trace,
        grad_alpha_trace=ga_trace,
        grad_v0_trace=gv_trace,
        iterations_run=iterations,
        converged=converged,
        displacement=final_path.displacement,
        deformed=warped,
    )
