"""Covariance functions.

Two kernels are used by the freeze-thaw model:

* the exponential-decay kernel over training epochs, an infinite mixture of
  ``exp(-lambda * t)`` basis functions with a gamma mixing density over the
  decay rate, which integrates to ``beta**alpha / (t + t' + beta)**alpha``;
* a Matern-5/2 kernel over the unit hypercube, applied after a per-dimension
  Beta-CDF input warping.

An Ornstein-Uhlenbeck term can be added to curve Gram matrices for sample
generation only; the inference model never uses it.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass(frozen=True)
class ExpDecayParams:
    """Shape ``alpha`` and rate ``beta`` of the gamma mixing density plus
    the per-observation noise variance."""

    alpha: float = 1.0
    beta: float = 1.0
    noise_var: float = 0.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"alpha and beta must be positive, got {self.alpha}, {self.beta}")
        if not self.noise_var >= 0:
            raise ValueError(f"noise_var must be non-negative, got {self.noise_var}")
        if not np.all(np.isfinite([self.alpha, self.beta, self.noise_var])):
            raise ValueError("non-finite decay parameters")


@dataclass(frozen=True)
class OuParams:
    variance: float = 0.01
    length: float = 5.0

    def __post_init__(self):
        if not (self.variance > 0 and self.length > 0):
            raise ValueError("OU variance and length must be positive")


@dataclass(frozen=True, eq=False)
class WarpedMaternParams:
    """Matern-5/2 hyperparameters over warped unit-cube inputs.

    ``length_scales``, ``warp_a`` and ``warp_b`` all have one entry per input
    dimension; ``mean`` is the constant prior mean of the GP.
    """

    amplitude: float
    length_scales: np.ndarray
    warp_a: np.ndarray
    warp_b: np.ndarray
    mean: float = 0.0

    def __post_init__(self):
        for name in ("length_scales", "warp_a", "warp_b"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        D = len(self.length_scales)
        if len(self.warp_a) != D or len(self.warp_b) != D:
            raise ValueError("length_scales, warp_a and warp_b must have equal length")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        for name in ("length_scales", "warp_a", "warp_b"):
            if not np.all(getattr(self, name) > 0):
                raise ValueError(f"{name} must be strictly positive")
        if not np.isfinite(self.mean):
            raise ValueError("mean must be finite")

    @property
    def dim(self):
        return len(self.length_scales)

    @classmethod
    def default(cls, dim, mean=0.0):
        return cls(1.0, np.full(dim, 5.0), np.ones(dim), np.ones(dim), mean)


def _check_times(*ts):
    for t in ts:
        t = np.asarray(t, dtype=float)
        if not np.all(np.isfinite(t)):
            raise ValueError("non-finite time input")
        if np.any(t < 0):
            raise ValueError("times must be non-negative")


def exp_decay_cov(t, t_prime, p, same_index=False):
    """Exponential-decay covariance ``beta**alpha / (t + t' + beta)**alpha``.

    Broadcasts over ``t`` and ``t_prime``. When ``same_index`` is true the
    noise variance is added (the caller asserts the two inputs are the same
    observation).
    """
    _check_times(t, t_prime)
    t = np.asarray(t, dtype=float)
    t_prime = np.asarray(t_prime, dtype=float)
    k = np.exp(p.alpha * (np.log(p.beta) - np.log(t + t_prime + p.beta)))
    if same_index:
        k = k + p.noise_var
    return k[()] if np.ndim(k) == 0 else k


def exp_decay_cov_quadrature(t, t_prime, p, nodes=64):
    """Numerically integrate the gamma mixture of decaying exponentials.

    Generalized Gauss-Laguerre quadrature over the decay rate, with the rule's
    rate set to ``beta + (t + t') / 2`` so the remaining integrand
    ``exp(-u * c)`` has ``c < 1`` and is smooth on the nodes. Noise-free.
    """
    if nodes < 16:
        raise ValueError("nodes must be at least 16")
    _check_times(t, t_prime)
    s = np.asarray(t, dtype=float) + np.asarray(t_prime, dtype=float)
    rate = p.beta + s / 2.0
    u, w = special.roots_genlaguerre(int(nodes), p.alpha - 1.0)
    # lambda = u / rate; the gamma density and Jacobian leave (beta/rate)^alpha.
    c = (s / 2.0 / rate)[..., None]
    integral = np.sum(w * np.exp(-u * c), axis=-1)
    k = (p.beta / rate) ** p.alpha * integral / special.gamma(p.alpha)
    return float(k) if np.ndim(k) == 0 else k


def ou_cov(t, t_prime, ou):
    return ou.variance * np.exp(-np.abs(np.subtract(t, t_prime)) / ou.length)


def curve_gram(times, p, ou=None):
    """Gram matrix of the curve kernel on ``times`` with noise on the diagonal."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1:
        raise ValueError("times must be a vector")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    K = exp_decay_cov(times[:, None], times[None, :], p)
    K = np.atleast_2d(K)
    if ou is not None:
        K = K + ou_cov(times[:, None], times[None, :], ou)
    K[np.diag_indices_from(K)] += p.noise_var
    return K


def beta_warp(x, a, b):
    """Beta CDF with shapes ``a`` and ``b``, elementwise over ``x`` in [0, 1]."""
    x = np.asarray(x, dtype=float)
    if x.size and not (x.min() >= 0 and x.max() <= 1):     # NaN fails both
        raise ValueError("beta_warp inputs must lie in [0, 1]")
    w = special.betainc(a, b, x)
    return w[()] if np.ndim(w) == 0 else w


def warp_inputs(X, p):
    """Apply the per-dimension warps to an ``(N, D)`` array of unit-cube points."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != p.dim:
        raise ValueError(f"expected points of dimension {p.dim}, got {X.shape[1]}")
    # betainc broadcasts the shape vectors across rows.
    return beta_warp(X, p.warp_a, p.warp_b)


def _matern52(r2, amplitude):
    r2 = 5.0 * np.maximum(r2, 0.0)
    r5 = np.sqrt(r2)
    return amplitude * (1.0 + r5 + r2 / 3.0) * np.exp(-r5)


def matern52_cross(X1, X2, p, warped=False):
    """Cross-covariance matrix between two point sets.

    ``warped=True`` means the inputs are already warped (lets callers reuse
    warped training inputs).
    """
    if not warped:
        X1 = warp_inputs(X1, p)
        X2 = warp_inputs(X2, p)
    A = X1 / p.length_scales
    B = X2 / p.length_scales
    D = A[:, None, :] - B[None, :, :]
    r2 = (D * D).sum(axis=-1)
    return _matern52(r2, p.amplitude)


def matern52_cov(x, x_prime, p):
    """Warped Matern-5/2 covariance between two single points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != (p.dim,) or x_prime.shape != (p.dim,):
        raise ValueError(f"expected points of dimension {p.dim}")
    w = beta_warp(x, p.warp_a, p.warp_b)
    wp = beta_warp(x_prime, p.warp_a, p.warp_b)
    r2 = np.sum(((w - wp) / p.length_scales) ** 2)
    return float(_matern52(r2, p.amplitude))


def hyper_gram(X, p):
    """Symmetric Gram matrix of the warped Matern kernel on ``X``."""
    W = warp_inputs(X, p)
    return matern52_cross(W, W, p, warped=True)
