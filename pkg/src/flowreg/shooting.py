"""Forward geodesic integration and inverse-map transport.

The geodesic evolution is integrated with forward Euler on uniform nodes
t_k = k / n_steps; the velocity at the left node drives the step for both
the velocity and the displacement equations.  The inverse map is carried
as a displacement u with phi^{-1} = id + u, which evolves as
du/dt = -v - Du * v and stays bandlimited.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import _gather, _jac_spatial, _spatial, ad_dagger
from .fields import BandlimitedField
from .operators import SpectralOperator


class BlowUpError(RuntimeError):
    """Non-finite coefficients appeared during time integration."""

    def __init__(self, step: int, what: str = "velocity"):
        super().__init__(f"non-finite {what} coefficients at integration step {step}")
        self.step = step


@dataclass(frozen=True)
class IntegratorConfig:
    n_steps: int = 10

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")


@dataclass(frozen=True)
class GeodesicPath:
    """Velocities and inverse-map displacements at the n_steps+1 time nodes."""

    velocities: list
    displacements: list
    n_steps: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "n_steps", len(self.velocities) - 1)

    @property
    def displacement(self) -> BandlimitedField:
        """The t=1 displacement u with phi^{-1} = id + u."""
        return self.displacements[-1]


def jacobian_times_field(u: BandlimitedField, v: BandlimitedField) -> BandlimitedField:
    """Matrix-vector truncated convolution (Du * v)_i = sum_j (d_j u_i) * v_j."""
    du = _jac_spatial(u)
    v_sp = _spatial(v.coeffs, v.d).real
    prod = np.einsum("ij...,j...->i...", du, v_sp)
    return u.with_coeffs(_gather(prod, u.trunc_dims, u.d))


def integrate_epdiff(v0: BandlimitedField, op: SpectralOperator, cfg: IntegratorConfig) -> list:
    """Euler steps of dv/dt = ad^dagger_v v; returns velocities at all nodes."""
    if v0.trunc_dims != op.trunc_dims:
        raise ValueError("initial velocity not on the operator window")
    dt = 1.0 / cfg.n_steps
    vels = [v0]
    v = v0
    for k in range(cfg.n_steps):
        v = v + dt * ad_dagger(v, v, op)
        if not np.all(np.isfinite(v.coeffs)):
            raise BlowUpError(k + 1)
        vels.append(v)
    return vels


def transport_inverse_map(velocities: list, cfg: IntegratorConfig) -> list:
    """Integrate du/dt = -v - Du * v from u(0) = 0 using stored node velocities.

    Returns the displacement at every time node; the final entry is the
    t=1 inverse map and the intermediates feed the exact adjoint sweep.
    """
    dt = 1.0 / cfg.n_steps
    u = BandlimitedField.zeros(velocities[0].trunc_dims, velocities[0].grid_dims)
    disps = [u]
    for k in range(cfg.n_steps):
        v = velocities[k]
        u = u + dt * (-1.0 * v - jacobian_times_field(u, v))
        if not np.all(np.isfinite(u.coeffs)):
            raise BlowUpError(k + 1, "displacement")
        disps.append(u)
    return disps


def shoot(v0: BandlimitedField, op: SpectralOperator, cfg: IntegratorConfig) -> GeodesicPath:
    """Forward-integrate EPDiff and transport the inverse-map displacement."""
    vels = integrate_epdiff(v0, op, cfg)
    disps = transport_inverse_map(vels, cfg)
    return GeodesicPath(velocities=vels, displacements=disps)


def metric_energy(v: BandlimitedField, op: SpectralOperator) -> float:
    """(L v, v): the conserved quantity of the continuum geodesic flow."""
    return float(np.sum(op.l_symbol * np.abs(v.coeffs) ** 2).real)
