import numpy as np
import pytest
from scipy import stats

from freezethaw.ftgp import CurveSet, log_marginal_likelihood
from freezethaw.mcmc import (HyperPriorSpec, HyperVector, SliceSamplingError, _Posterior,
                             horseshoe_logpdf, initial_hypers, log_prior, lognormal_logpdf,
                             observed_bounds, sample_hypers, slice_sample_step)
from freezethaw.kernels import WarpedMaternParams
from freezethaw.ftgp import Hypers

from helpers import random_curves, random_hypers


def run_chain(log_target, x0, n, width=1.0, seed=0):
    rng = np.random.default_rng(seed)
    out = np.empty(n)
    x = x0
    for i in range(n):
        x = slice_sample_step(x, log_target, width, rng)
        out[i] = x
    return out


def with_matern(h, **changes):
    p = h.matern
    fields = dict(amplitude=p.amplitude, length_scales=p.length_scales, warp_a=p.warp_a,
                  warp_b=p.warp_b, mean=p.mean)
    fields.update(changes)
    return Hypers(WarpedMaternParams(**fields), h.decay)


def test_lognormal_at_one():
    assert float(lognormal_logpdf(1.0)) == pytest.approx(-np.log(np.sqrt(2 * np.pi)), rel=1e-14)
    assert float(lognormal_logpdf(2.0, 0.3, 0.7)) == pytest.approx(
        stats.lognorm.logpdf(2.0, 0.7, scale=np.exp(0.3)), rel=1e-12)
    assert lognormal_logpdf(0.0) == -np.inf


def test_horseshoe_surrogate():
    assert float(horseshoe_logpdf(0.1)) == pytest.approx(np.log(np.log(2.0)))
    assert horseshoe_logpdf(-1.0) == -np.inf
    assert horseshoe_logpdf(1e-3) > horseshoe_logpdf(1.0)


def test_log_prior_supports():
    h = initial_hypers(2, (0.0, 1.0))
    assert np.isfinite(log_prior(h, y_bounds=(0.0, 1.0)))
    assert log_prior(with_matern(h, length_scales=np.array([11.0, 1.0]))) == -np.inf
    assert log_prior(with_matern(h, mean=1.5), y_bounds=(0.0, 1.0)) == -np.inf


def test_log_prior_amplitude_term():
    h = initial_hypers(1)
    h2 = with_matern(h, amplitude=np.e)
    # Only the amplitude's lognormal term changes.
    diff = log_prior(h2) - log_prior(h)
    assert diff == pytest.approx(float(lognormal_logpdf(np.e) - lognormal_logpdf(1.0)), rel=1e-12)


def test_sampler_coordinates_include_jacobian():
    rng = np.random.default_rng(0)
    data = random_curves(rng, 4, 5, 2)
    space = HyperVector(2)
    bounds = observed_bounds(data)
    post = _Posterior(data, HyperPriorSpec(), bounds, space)
    for _ in range(10):
        h = random_hypers(rng, 2, mean=rng.uniform(*bounds))
        z = space.from_hypers(h)
        log_params = np.delete(z, space.mean_index)
        assert post.log_prior(z) == pytest.approx(log_prior(h, y_bounds=bounds) + log_params.sum(),
                                                  rel=1e-12)
        assert post(z) == pytest.approx(post.log_prior(z) + log_marginal_likelihood(data, h), rel=1e-10)


def test_hyper_vector_round_trip():
    rng = np.random.default_rng(1)
    space = HyperVector(3)
    h = random_hypers(rng, 3)
    z = space.from_hypers(h)
    assert len(z) == space.size == len(space.names)
    assert np.allclose(space.from_hypers(space.to_hypers(z)), z, rtol=1e-14)


def test_observed_bounds():
    assert observed_bounds(CurveSet(dim=1)) == (0.0, 1.0)
    data = CurveSet(dim=1)
    n = data.add_config([0.5])
    data.append(n, 2.0)
    lo, hi = observed_bounds(data)
    assert lo < 2.0 < hi


def test_slice_standard_normal():
    s = run_chain(lambda x: -0.5 * x * x, 0.0, 50_000)
    assert abs(s.mean()) <= 0.02
    assert s.var() == pytest.approx(1.0, rel=0.05)


def test_slice_lognormal_mean():
    s = run_chain(lambda x: float(lognormal_logpdf(x)), 1.0, 50_000)
    assert s.mean() == pytest.approx(np.exp(0.5), rel=0.05)


def test_slice_uniform_ks():
    s = run_chain(lambda x: 0.0 if 0 <= x <= 1 else -np.inf, 0.5, 10_000, width=0.5)
    ks = stats.kstest(s, "uniform").statistic
    assert ks < 1.63 / np.sqrt(len(s))


def test_slice_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(SliceSamplingError):
        slice_sample_step(0.0, lambda x: -np.inf, 1.0, rng)
    # A slice that only contains the current point cannot be hit by shrinkage.
    with pytest.raises(SliceSamplingError):
        slice_sample_step(0.0, lambda x: 0.0 if x == 0.0 else -np.inf, 1.0, rng)


@pytest.mark.slow
def test_prior_only_sampling_moments():
    samples = sample_hypers(CurveSet(dim=1), n_samples=5000, burn_in=10, rng=3)
    lengths = np.array([h.matern.length_scales[0] for h in samples])
    assert lengths.mean() == pytest.approx(5.0, abs=0.2)
    assert np.all(lengths <= 10.0)


def test_sampler_is_deterministic_and_valid():
    rng = np.random.default_rng(5)
    data = random_curves(rng, 6, 6, 2)
    a = sample_hypers(data, n_samples=4, burn_in=3, rng=11)
    b = sample_hypers(data, n_samples=4, burn_in=3, rng=11)
    space = HyperVector(2)
    for ha, hb in zip(a, b):
        assert np.array_equal(space.from_hypers(ha), space.from_hypers(hb))
        assert np.isfinite(log_prior(ha, y_bounds=observed_bounds(data)))
        assert np.isfinite(log_marginal_likelihood(data, ha))
        assert ha.decay.noise_var > 0 and np.all(ha.matern.length_scales > 0)


def test_sampler_warm_start_with_stale_mean():
    rng = np.random.default_rng(6)
    data = random_curves(rng, 4, 4, 2)
    stale = with_matern(initial_hypers(2), mean=1e3)
    samples = sample_hypers(data, n_samples=2, burn_in=1, rng=0, init=stale)
    lo, hi = observed_bounds(data)
    assert all(lo <= h.mean <= hi for h in samples)


def test_sampler_rejects_zero_samples():
    with pytest.raises(ValueError):
        sample_hypers(CurveSet(dim=1), n_samples=0)
