import numpy as np
import pytest

from flowreg.operators import SpectralOperator
from flowreg.posterior import (
    MapResult,
    PosteriorConfig,
    grad_alpha,
    grad_v0_total,
    log_posterior,
    map_estimate,
    prior_energy,
    sample_prior,
)
from flowreg.shooting import shoot
from flowreg.synth import BullEyeSpec, synthesize_pair


ALPHA = 6.0
CFG = PosteriorConfig()


@pytest.fixture(scope="module")
def pair():
    return synthesize_pair(BullEyeSpec(), ALPHA, 11, CFG, min_det=0.1, max_attempts=32)


def test_config_validation():
    with pytest.raises(ValueError):
        PosteriorConfig(sigma=0.0)
    with pytest.raises(ValueError):
        PosteriorConfig(max_iters=0)


def test_grad_alpha_matches_fd(pair):
    op = SpectralOperator.build(ALPHA, (16, 16))
    v0 = 0.5 * sample_prior(ALPHA, op, 4, pair.source.shape)
    path = shoot(v0, op, CFG.integrator())
    h = 1e-5
    # the deformation is held fixed: the likelihood term does not move
    ep = log_posterior(v0, pair.source, pair.target, ALPHA + h, CFG, path=path)
    em = log_posterior(v0, pair.source, pair.target, ALPHA - h, CFG, path=path)
    fd = (ep - em) / (2.0 * h)
    ana = grad_alpha(v0, ALPHA, op)
    assert abs(fd - ana) / abs(fd) < 1e-6


def test_grad_v0_matches_fd(pair):
    op = SpectralOperator.build(ALPHA, (16, 16))
    v0 = 0.3 * sample_prior(ALPHA, op, 7, pair.source.shape)
    g, _, _ = grad_v0_total(v0, pair.source, pair.target, ALPHA, CFG)
    w = sample_prior(ALPHA, op, 23, pair.source.shape)
    w = (1.0 / w.norm()) * w
    h = 1e-6
    ep = log_posterior(v0 + h * w, pair.source, pair.target, ALPHA, CFG)
    em = log_posterior(v0 + (-h) * w, pair.source, pair.target, ALPHA, CFG)
    fd = (ep - em) / (2.0 * h)
    # Sobolev gradient: the Euclidean gradient is L g
    ana = float(np.sum(np.conj(w.coeffs) * (op.l_symbol * g.coeffs)).real)
    assert abs(fd - ana) / abs(fd) < 1e-4


def test_prior_energy_quadratic():
    op = SpectralOperator.build(2.0, (8, 8))
    v = sample_prior(2.0, op, 1, (20, 20))
    assert prior_energy(2.0 * v, op) == pytest.approx(4.0 * prior_energy(v, op))


def test_log_posterior_at_zero_velocity(pair):
    # with v0 = 0 the data term is just the unwarped residual
    from flowreg.fields import BandlimitedField

    v0 = BandlimitedField.zeros((16, 16), pair.source.shape)
    e = log_posterior(v0, pair.source, pair.target, ALPHA, CFG)
    resid = pair.source - pair.target
    M = float(pair.source.size)
    expect_data = float(np.sum(resid**2)) / (2.0 * CFG.sigma**2)
    const = 2.0 * M * np.log(CFG.sigma) + M * np.log(2.0 * np.pi)
    op = SpectralOperator.build(ALPHA, (16, 16))
    from flowreg.posterior import _half_logdet

    assert e == pytest.approx(expect_data + const - _half_logdet(ALPHA, op))


def test_sample_prior_is_hermitian():
    op = SpectralOperator.build(3.0, (16, 16))
    v = sample_prior(3.0, op, 0, (100, 100))
    assert v.hermitian_error() < 1e-12


def test_sample_prior_rejects_bad_alpha():
    op = SpectralOperator.build(3.0, (8, 8))
    with pytest.raises(ValueError):
        sample_prior(0.0, op, 0, (20, 20))


def test_map_estimate_fixed_alpha_monotone(pair):
    cfg = PosteriorConfig(max_iters=25)
    res = map_estimate(pair.source, pair.target, cfg, fixed_alpha=ALPHA)
    assert isinstance(res, MapResult)
    trace = np.asarray(res.energy_trace)
    assert np.all(np.diff(trace) <= 0.0)
    assert trace[-1] < trace[0]
    assert res.alpha_opt == ALPHA
    assert res.deformed.shape == pair.source.shape


def test_map_estimate_validates_inputs(pair):
    with pytest.raises(ValueError):
        map_estimate(pair.source, pair.target[:50], CFG)
    with pytest.raises(ValueError):
        map_estimate(pair.source, pair.target, CFG, fixed_alpha=-1.0)


def test_map_estimate_callback(pair):
    seen = []
    cfg = PosteriorConfig(max_iters=5)
    map_estimate(pair.source, pair.target, cfg, fixed_alpha=ALPHA,
                 callback=lambda *args: seen.append(args))
    assert seen and all(len(s) == 5 for s in seen)
