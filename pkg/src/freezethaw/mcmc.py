"""Hyperparameter priors and slice sampling.

Every scalar GP hyperparameter is updated in turn with a univariate
step-out/shrinkage slice sampler targeting log marginal likelihood plus log
prior. Positive parameters are sampled as their logarithm (with the Jacobian
term), the constant mean directly.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .ftgp import Hypers, PaddedCurves, curve_summaries, structured_lml
from .kernels import ExpDecayParams, WarpedMaternParams, _matern52, beta_warp

logger = logging.getLogger(__name__)

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

#: Alias: one posterior sample is a complete hyperparameter assignment.
HyperSample = Hypers


class SliceSamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class HyperPriorSpec:
    """Priors over the GP hyperparameters.

    lognormal(loc, scale) on the amplitude, warp shapes, alpha and beta;
    uniform(0, length_scale_max) on length scales; horseshoe(horseshoe_scale)
    on the noise variance; uniform over the observed loss range on the mean.
    """

    lognormal_loc: float = 0.0
    lognormal_scale: float = 1.0
    length_scale_max: float = 10.0
    horseshoe_scale: float = 0.1


def lognormal_logpdf(x, loc=0.0, scale=1.0):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lx = np.log(x)
        out = -lx - np.log(scale) - LOG_SQRT_2PI - 0.5 * ((lx - loc) / scale) ** 2
    return np.where(x > 0, out, -np.inf)


def horseshoe_logpdf(x, scale=0.1):
    """Unnormalized horseshoe surrogate ``log(log(1 + (scale / x)**2))``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(np.log1p((scale / x) ** 2))
    return np.where(x > 0, out, -np.inf)


def uniform_logpdf(x, low, high):
    x = np.asarray(x, dtype=float)
    inside = (x >= low) & (x <= high)
    return np.where(inside, -np.log(high - low), -np.inf)


def observed_bounds(data):
    """Range of observed losses, widened when degenerate; (0, 1) with no data."""
    y = data.all_losses()
    if not len(y):
        return 0.0, 1.0
    lo, hi = float(y.min()), float(y.max())
    if hi - lo < 1e-6:
        pad = max(1e-3 * abs(lo), 1e-3)
        lo, hi = lo - pad, hi + pad
    return lo, hi


def log_prior(h, spec=HyperPriorSpec(), y_bounds=(0.0, 1.0)):
    p, d = h.matern, h.decay
    ln = lambda v: float(np.sum(lognormal_logpdf(v, spec.lognormal_loc, spec.lognormal_scale)))
    total = (ln(p.amplitude) + ln(p.warp_a) + ln(p.warp_b) + ln(d.alpha) + ln(d.beta)
             + float(np.sum(uniform_logpdf(p.length_scales, 0.0, spec.length_scale_max)))
             + float(horseshoe_logpdf(d.noise_var, spec.horseshoe_scale))
             + float(uniform_logpdf(p.mean, *y_bounds)))
    return total if np.isfinite(total) else -np.inf


def slice_sample_step(current, log_target, width, rng, max_shrink=1000, max_step_out=200):
    """One univariate slice-sampling update with stepping out and shrinkage.

    Raises
    ------
    SliceSamplingError
        If ``log_target(current)`` is not finite or shrinkage does not find a
        point on the slice within ``max_shrink`` steps.
    """
    f0 = log_target(current)
    if not np.isfinite(f0):
        raise SliceSamplingError(f"log target not finite at the current point {current}")
    level = f0 + np.log(rng.uniform())
    left = current - width * rng.uniform()
    right = left + width
    j = int(np.floor(max_step_out * rng.uniform()))
    k = max_step_out - 1 - j
    while j > 0 and log_target(left) > level:
        left -= width
        j -= 1
    while k > 0 and log_target(right) > level:
        right += width
        k -= 1
    for _ in range(max_shrink):
        proposal = left + (right - left) * rng.uniform()
        if log_target(proposal) > level:
            return proposal
        if proposal < current:
            left = proposal
        else:
            right = proposal
    raise SliceSamplingError("slice shrinkage did not terminate")


class HyperVector:
    """Flat parameterization of :class:`Hypers` used by the sampler.

    Order: amplitude, length scales, warp a, warp b, mean, alpha, beta,
    noise variance. All entries except the mean are stored as logs.
    """

    def __init__(self, dim):
        self.dim = dim
        self.names = (["amplitude"] + [f"length_scale_{d}" for d in range(dim)]
                      + [f"warp_a_{d}" for d in range(dim)]
                      + [f"warp_b_{d}" for d in range(dim)]
                      + ["mean", "alpha", "beta", "noise_var"])
        self.mean_index = 1 + 3 * dim
        self.size = len(self.names)

    def to_hypers(self, z):
        D = self.dim
        v = np.exp(z)
        matern = WarpedMaternParams(v[0], v[1:1 + D], v[1 + D:1 + 2 * D],
                                    v[1 + 2 * D:1 + 3 * D], float(z[self.mean_index]))
        decay = ExpDecayParams(v[-3], v[-2], v[-1])
        return Hypers(matern, decay)

    def from_hypers(self, h):
        p, d = h.matern, h.decay
        z = np.concatenate([[np.log(p.amplitude)], np.log(p.length_scales),
                            np.log(p.warp_a), np.log(p.warp_b), [p.mean],
                            np.log([d.alpha, d.beta, d.noise_var])])
        return z


def initial_hypers(dim, y_bounds=(0.0, 1.0), mean=None):
    """Scale-neutral starting point at the prior medians."""
    if mean is None:
        mean = 0.5 * (y_bounds[0] + y_bounds[1])
    return Hypers(WarpedMaternParams(1.0, np.full(dim, 5.0), np.ones(dim), np.ones(dim), mean),
                  ExpDecayParams(1.0, 1.0, 0.01))


class _Posterior:
    """Log posterior over the flat vector ``z`` (see :class:`HyperVector`).

    Caches the curve statistics, warped inputs and ``K_x`` so a move in one
    coordinate only recomputes what depends on it.
    """

    def __init__(self, data, spec, y_bounds, space):
        self.space = space
        self.spec = spec
        self.y_bounds = y_bounds
        self.X_obs = data.X[data.observed()]
        self.padded = PaddedCurves.from_data(data)
        self._summary = (None, None)
        self._warp = (None, None)
        self._kx = (None, None)

    def log_prior(self, z):
        """log prior of z in sampler coordinates, Jacobian included."""
        D = self.space.dim
        spec = self.spec
        lengths = np.exp(z[1:1 + D])
        if np.any(lengths > spec.length_scale_max):
            return -np.inf
        m = z[self.space.mean_index]
        lo, hi = self.y_bounds
        if not lo <= m <= hi:
            return -np.inf
        # lognormal density in log coordinates: the -log x term cancels the Jacobian.
        logn = np.concatenate([z[:1], z[1 + D:1 + 3 * D], z[-3:-1]])
        lp = np.sum(-np.log(spec.lognormal_scale) - LOG_SQRT_2PI
                    - 0.5 * ((logn - spec.lognormal_loc) / spec.lognormal_scale) ** 2)
        lp += D * -np.log(spec.length_scale_max) + np.sum(z[1:1 + D])
        lp += -np.log(hi - lo)
        noise = np.exp(z[-1])
        lp += np.log(np.log1p((spec.horseshoe_scale / noise) ** 2)) + z[-1]
        return float(lp)

    def log_likelihood(self, z):
        D = self.space.dim
        dkey = tuple(z[-3:])
        if self._summary[0] != dkey:
            decay = ExpDecayParams(*np.exp(z[-3:]))
            self._summary = (dkey, curve_summaries(None, decay, padded=self.padded))
        wkey = tuple(z[1 + D:1 + 3 * D])
        if self._warp[0] != wkey:
            a, b = np.exp(z[1 + D:1 + 2 * D]), np.exp(z[1 + 2 * D:1 + 3 * D])
            W = beta_warp(self.X_obs, a, b)
            # Per-dimension squared differences; length scales only reweight them.
            self._warp = (wkey, np.moveaxis((W[:, None, :] - W[None, :, :]) ** 2, -1, 0))
            self._kx = (None, None)
        kkey = tuple(z[:1 + D])
        if self._kx[0] != kkey:
            r2 = np.tensordot(np.exp(-2.0 * z[1:1 + D]), self._warp[1], axes=1)
            self._kx = (kkey, _matern52(r2, np.exp(z[0])))
        return structured_lml(self._summary[1], self._kx[1], z[self.space.mean_index])

    def __call__(self, z):
        if not np.all(np.isfinite(z)):
            return -np.inf
        lp = self.log_prior(z)
        if not np.isfinite(lp):
            return -np.inf
        try:
            lml = self.log_likelihood(z)
        except (np.linalg.LinAlgError, ValueError):
            return -np.inf
        if not np.isfinite(lml):
            return -np.inf
        return lml + lp


def sample_hypers(data, spec=HyperPriorSpec(), n_samples=10, burn_in=50, rng=None,
                  init=None, widths=None):
    """Slice-sample GP hyperparameters given ``data``.

    Parameters
    ----------
    data : CurveSet
    n_samples : int
        Number of sweeps kept after burn-in; one sample per sweep.
    burn_in : int
        Sweeps discarded first.
    init : Hypers, optional
        Starting point (e.g. the last sample of a previous chain). Defaults
        to the prior medians with the mean at the average observed loss.

    Returns
    -------
    list of Hypers
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(rng)
    y_bounds = observed_bounds(data)
    space = HyperVector(data.dim)
    target = _Posterior(data, spec, y_bounds, space)
    if init is None:
        y = data.all_losses()
        init = initial_hypers(data.dim, y_bounds, float(np.mean(y)) if len(y) else None)
    z = space.from_hypers(init)
    if not np.isfinite(target(z)):
        # Keep the start inside the prior support (e.g. a stale mean).
        z[space.mean_index] = np.clip(z[space.mean_index], *y_bounds)
        if not np.isfinite(target(z)):
            z = space.from_hypers(initial_hypers(data.dim, y_bounds))
    if widths is None:
        widths = np.ones(space.size)
        widths[space.mean_index] = max(y_bounds[1] - y_bounds[0], 1e-3)

    samples = []
    for sweep in range(burn_in + n_samples):
        for i in range(space.size):
            def log_target(v, i=i):
                zz = z.copy()
                zz[i] = v
                return target(zz)
            try:
                z[i] = slice_sample_step(z[i], log_target, widths[i], rng)
            except SliceSamplingError:
                logger.warning("slice sampling stalled on %s; keeping value", space.names[i])
        if sweep >= burn_in:
            samples.append(space.to_hypers(z.copy()))
    return samples
