"""Synthetic bull-eye pairs: nested-ellipse images deformed by prior draws."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .fields import BandlimitedField, to_spatial
from .operators import SpectralOperator
from .posterior import PosteriorConfig, sample_prior
from .shooting import BlowUpError, shoot
from .warping import jacobian_determinant_map, warp_image

log = logging.getLogger(__name__)


class FoldedDrawError(RuntimeError):
    """Every attempted prior draw produced a folding deformation."""

    def __init__(self, seed, attempt, det_floor):
        super().__init__(
            f"prior draw folds (min Jacobian det {det_floor:.3f}) for seed {seed} attempt {attempt}"
        )
        self.det_floor = det_floor


@dataclass(frozen=True)
class BullEyeSpec:
    """Two nested ellipses around a common center.

    ``ramp`` is the half-width (pixels) of the smooth intensity transition
    at each ellipse boundary; 0 gives a strictly binary image.
    """

    outer: tuple = (35.0, 35.0)
    inner: tuple = (16.0, 16.0)
    size: tuple = (100, 100)
    center: tuple = (50.0, 50.0)
    background: float = 0.0
    ring: float = 0.5
    disk: float = 1.0
    ramp: float = 1.0

    def __post_init__(self):
        half = min(self.size) / 2
        for i in range(2):
            if not (0 < self.inner[i] < self.outer[i] < half):
                raise ValueError("require 0 < inner semi-axes < outer semi-axes < half image size")


def _ellipse_level(spec: BullEyeSpec, axes: tuple) -> np.ndarray:
    """Normalized ellipse coordinate r with r = 1 on the boundary."""
    a, b = axes
    cx, cy = spec.center
    x = np.arange(spec.size[0])[:, None] - cx
    y = np.arange(spec.size[1])[None, :] - cy
    return np.sqrt((x / a) ** 2 + (y / b) ** 2)


def _inside(spec: BullEyeSpec, axes: tuple) -> np.ndarray:
    """Smoothstep membership of the ellipse interior (1 inside, 0 outside)."""
    r = _ellipse_level(spec, axes)
    # convert the ramp half-width from pixels to r-units via the smaller semi-axis
    if spec.ramp <= 0:
        return (r <= 1.0).astype(np.float64)
    w = spec.ramp / min(axes)
    t = np.clip((1.0 - r) / (2.0 * w) + 0.5, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def bulleye(spec: BullEyeSpec) -> np.ndarray:
    """Bull-eye image with background / ring / disk intensity regions."""
    outer = _inside(spec, spec.outer)
    inner = _inside(spec, spec.inner)
    return spec.background + (spec.ring - spec.background) * outer + (spec.disk - spec.ring) * inner


def synthesize_labels(spec: BullEyeSpec) -> np.ndarray:
    """Integer partition of the grid: 0 background, 1 ring, 2 disk."""
    outer = _ellipse_level(spec, spec.outer) <= 1.0
    inner = _ellipse_level(spec, spec.inner) <= 1.0
    labels = np.zeros(spec.size, dtype=np.int32)
    labels[outer] = 1
    labels[inner] = 2
    return labels


def random_bulleye_spec(rng: np.random.Generator, size=(100, 100)) -> BullEyeSpec:
    """Per-sample ellipse variety; axis ranges are a convention of this corpus."""
    outer = tuple(rng.uniform(28.0, 42.0, size=2))
    inner = tuple(rng.uniform(12.0, 20.0, size=2))
    return BullEyeSpec(outer=outer, inner=inner, size=tuple(size))


@dataclass(frozen=True)
class SynthPair:
    source: np.ndarray
    target: np.ndarray
    true_alpha: float
    v0_true: BandlimitedField
    seed: int
    displacement: BandlimitedField
    labels: np.ndarray


def synthesize_pair(
    spec: BullEyeSpec,
    alpha: float,
    seed: int,
    cfg: PosteriorConfig,
    min_det: float = None,
    max_attempts: int = 5,
    peak_speed: float = None,
) -> SynthPair:
    """Sample v0 from the prior, shoot, and warp the bull-eye source.

    A shooting blow-up (non-finite coefficients) triggers a resample with
    the next sub-seed.  With ``min_det`` set, draws whose deformation
    folds (Jacobian determinant at or below the floor somewhere) are
    likewise resampled; at small alpha most raw draws fold, so callers
    that need valid diffeomorphic ground truth should pass a floor and a
    generous ``max_attempts``.

    ``peak_speed`` rescales each draw to a fixed maximum pointwise speed
    before shooting.  Raw prior draws below alpha ~ 2 are too violent to
    integrate at this resolution (most blow up or fold everywhere), so
    corpora spanning small alpha keep only the draw's spectral shape and
    pin the amplitude.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if peak_speed is not None and peak_speed <= 0:
        raise ValueError("peak_speed must be positive")
    source = bulleye(spec)
    labels = synthesize_labels(spec)
    trunc = cfg.trunc_dims(source.ndim)
    op = SpectralOperator.build(alpha, trunc)
    last_err = None
    for attempt in range(max_attempts):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), attempt]))
        v0 = sample_prior(alpha, op, rng, source.shape)
        if peak_speed is not None:
            speed = float(np.sqrt((to_spatial(v0) ** 2).sum(axis=0)).max())
            if speed > 0:
                v0 = v0.with_coeffs(v0.coeffs * (peak_speed / speed))
        try:
            path = shoot(v0, op, cfg.integrator())
        except BlowUpError as err:
            log.warning("shooting blow-up for seed %s attempt %d: %s", seed, attempt, err)
            last_err = err
            continue
        if min_det is not None:
            det_floor = float(jacobian_determinant_map(path.displacement).min())
            if det_floor <= min_det:
                log.info("folded draw (min det %.3f) for seed %s attempt %d", det_floor, seed, attempt)
                last_err = FoldedDrawError(seed, attempt, det_floor)
                continue
        target = warp_image(source, path.displacement)
        if not np.all(np.isfinite(target)):
            # a draw can pass the shooting blow-up check yet carry a
            # displacement large enough to overflow the sampler
            log.warning("non-finite target for seed %s attempt %d", seed, attempt)
            last_err = BlowUpError(f"non-finite warp for seed {seed}")
            continue
        return SynthPair(
            source=source,
            target=target,
            true_alpha=float(alpha),
            v0_true=v0,
            seed=int(seed),
            displacement=path.displacement,
            labels=labels,
        )
    raise last_err
