"""Structured Gaussian process over training curves.

Each configuration ``x_n`` has a latent asymptote ``f_n``; the observed curve
``y_n`` (losses at epochs ``1..T_n``) is ``f_n`` plus an independent draw from
the exponential-decay GP. The asymptotes share a warped Matern GP prior with
constant mean ``m``. Marginalizing ``f`` gives

    y ~ N(O m, K_t + O K_x O^T),

with ``K_t`` block diagonal and ``O`` the block matrix of ones. Inference
never forms that ``NT x NT`` matrix: per-curve solves give

    gamma_n  = 1^T K_tn^-1 (y_n - m)
    lambda_n = 1^T K_tn^-1 1

and the latent posterior is ``f | y ~ N(m + C gamma, C)`` with
``C = (K_x^-1 + Lambda)^-1``. Because every curve is observed on the epoch
grid ``1..T_n``, each ``K_tn`` is a leading block of one ``T x T`` Gram
matrix and shares its Cholesky factor, so a fit costs
``O(T^3 + N T^2 + N^3)``.

:func:`dense_joint_oracle` evaluates the same quantities from the full joint
Gaussian and exists to check the structured path.
"""

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .kernels import (ExpDecayParams, WarpedMaternParams, curve_gram,
                      exp_decay_cov, hyper_gram, matern52_cross, warp_inputs)
from .linalg import chol_logdet, chol_solve, jitchol, tri_solve

LOG_2PI = np.log(2.0 * np.pi)
DENSE_MAX_OBS = 400


@dataclass(frozen=True, eq=False)
class Hypers:
    """One complete GP hyperparameter assignment."""

    matern: WarpedMaternParams
    decay: ExpDecayParams

    @property
    def mean(self):
        return self.matern.mean


@dataclass(eq=False)
class GaussianPrediction:
    mean: object
    variance: object


class CurveSet:
    """Configurations in the unit cube and their per-epoch losses.

    ``curves[n][t - 1]`` is the loss of configuration ``n`` after epoch ``t``.
    Configurations may have no observations yet.
    """

    def __init__(self, X=None, curves=None, ids=None, dim=None):
        if X is None:
            if dim is None:
                raise ValueError("need X or dim")
            X = np.empty((0, dim))
        X = np.array(X, dtype=float, ndmin=2)
        if X.size == 0 and dim is not None:
            X = X.reshape(0, dim)
        if curves is None:
            curves = [[] for _ in range(len(X))]
        if ids is None:
            ids = list(range(len(X)))
        if not (len(X) == len(curves) == len(ids)):
            raise ValueError("X, curves and ids must have equal length")
        if len(set(ids)) != len(ids):
            raise ValueError("config ids must be unique")
        if np.any(X < 0) or np.any(X > 1) or not np.all(np.isfinite(X)):
            raise ValueError("configurations must lie in the unit cube")
        self.X = X
        self.curves = [np.array(y, dtype=float).ravel() for y in curves]
        self.ids = list(ids)
        for y in self.curves:
            if not np.all(np.isfinite(y)):
                raise ValueError("non-finite loss")

    @property
    def dim(self):
        return self.X.shape[1]

    def __len__(self):
        return len(self.curves)

    @property
    def lengths(self):
        return np.array([len(y) for y in self.curves], dtype=int)

    @property
    def n_obs(self):
        return int(self.lengths.sum())

    def observed(self):
        """Indices of configurations with at least one observation."""
        return np.flatnonzero(self.lengths > 0)

    def index_of(self, config_id):
        try:
            return self.ids.index(config_id)
        except ValueError:
            raise KeyError(f"unknown config {config_id!r}") from None

    def add_config(self, x, config_id=None):
        x = np.asarray(x, dtype=float).reshape(1, self.dim)
        if np.any(x < 0) or np.any(x > 1):
            raise ValueError("configuration outside the unit cube")
        if config_id is None:
            config_id = max([i for i in self.ids if isinstance(i, int)], default=-1) + 1
        if config_id in self.ids:
            raise ValueError(f"duplicate config id {config_id!r}")
        self.X = np.vstack([self.X, x])
        self.curves.append(np.empty(0))
        self.ids.append(config_id)
        return len(self.curves) - 1

    def append(self, index, loss):
        if not np.isfinite(loss):
            raise ValueError("non-finite loss")
        self.curves[index] = np.append(self.curves[index], float(loss))

    def copy(self):
        new = CurveSet.__new__(CurveSet)
        new.X = self.X.copy()
        new.curves = [y.copy() for y in self.curves]
        new.ids = list(self.ids)
        return new

    def all_losses(self):
        if not len(self.curves):
            return np.empty(0)
        return np.concatenate(self.curves)

    def permuted(self, order):
        order = list(order)
        return CurveSet(self.X[order], [self.curves[i] for i in order],
                        [self.ids[i] for i in order])


@dataclass(eq=False)
class CurveSummary:
    """Per-curve sufficient statistics for one set of decay parameters.

    Losses are centred on ``center`` before solving so that changing the GP
    mean only needs cheap updates::

        gamma_n = uy_n - (m - center) * lam_n
        quad_n  = yy_n - 2 (m - center) uy_n + (m - center)^2 lam_n
    """

    decay: ExpDecayParams
    obs: np.ndarray          # config indices with >= 1 observation
    lengths: np.ndarray      # T_n for each observed curve
    chol_t: np.ndarray       # Cholesky of the curve Gram on epochs 1..T
    u: np.ndarray            # chol_t^-1 1
    center: float
    uy: np.ndarray
    yy: np.ndarray
    lam: np.ndarray
    logdet: np.ndarray

    def gamma(self, m):
        return self.uy - (m - self.center) * self.lam

    def quad(self, m):
        d = m - self.center
        return self.yy - 2.0 * d * self.uy + d * d * self.lam


@functools.lru_cache(maxsize=64)
def _epoch_grid(T):
    """Read-only helpers for a T-epoch Gram: Hankel index, i + j values, ones."""
    idx = np.add.outer(np.arange(T), np.arange(T))
    s = np.arange(2, 2 * T + 1, dtype=float)
    ones = np.ones(T)
    for a in (idx, s, ones):
        a.setflags(write=False)
    return idx, s, ones


def _epoch_factor(decay, T):
    # The Gram on epochs 1..T depends only on i + j: build it from 2T - 1 values.
    idx, s, ones = _epoch_grid(T)
    k = (decay.beta / (s + decay.beta)) ** decay.alpha
    K = k[idx]
    K.flat[::T + 1] += decay.noise_var
    L = jitchol(K)
    u = tri_solve(L, ones)
    return L, u


def _curve_stats(L, u, y, center):
    T = len(y)
    v = tri_solve(L[:T, :T], y - center)
    uT = u[:T]
    return (float(uT @ v), float(v @ v), float(uT @ uT),
            2.0 * float(np.sum(np.log(np.diag(L)[:T]))))


@dataclass(eq=False)
class PaddedCurves:
    """Observed curves stacked into a zero-padded ``(T, n)`` matrix."""

    obs: np.ndarray
    lengths: np.ndarray
    center: float
    R: np.ndarray
    mask: np.ndarray

    @classmethod
    def from_data(cls, data, min_epochs=0):
        all_lengths = data.lengths
        obs = np.flatnonzero(all_lengths > 0)
        lengths = all_lengths[obs]
        T = int(max(lengths.max(initial=0), min_epochs, 1))
        y = data.all_losses()
        center = float(y.sum()) / len(y) if len(y) else 0.0
        mask = np.arange(T)[:, None] < lengths[None, :]
        # Row-major fill of the transpose walks each curve in epoch order.
        Rt = np.zeros((len(obs), T))
        Rt[mask.T] = y - center
        return cls(obs, lengths, center, Rt.T, mask)


def curve_summaries(data, decay, min_epochs=0, padded=None):
    """Solve every observed curve against its epoch Gram matrix.

    All curves share the Cholesky factor of the Gram matrix on
    ``1..max(T_n, min_epochs)``; the factor of a leading block is the leading
    block of the factor, and forward substitution on zero-padded columns is
    exact on the leading rows.
    """
    if padded is None:
        padded = PaddedCurves.from_data(data, min_epochs)
    T = len(padded.R)
    L, u = _epoch_factor(decay, T)
    V = tri_solve(L, padded.R) * padded.mask
    last = padded.lengths - 1
    return CurveSummary(
        decay=decay, obs=padded.obs, lengths=padded.lengths, chol_t=L, u=u,
        center=padded.center, uy=u @ V, yy=np.einsum("ij,ij->j", V, V),
        lam=np.cumsum(u * u)[last], logdet=2.0 * np.cumsum(np.log(np.diagonal(L)))[last])


def structured_lml(summary, K_x, m):
    """Log marginal likelihood from curve statistics and the asymptote Gram.

    Uses ``log|K_x^-1 + Lambda| + log|K_x| = log|I + Lambda^1/2 K_x Lambda^1/2|``
    and ``(K_x^-1 + Lambda)^-1 = C``, so ``K_x`` itself is never factorized.
    """
    n = len(summary.obs)
    if n == 0:
        return 0.0
    gamma = summary.gamma(m)
    s = np.sqrt(summary.lam)
    B = np.eye(n) + s[:, None] * K_x * s[None, :]
    L_B = jitchol(B)
    Kg = K_x @ gamma
    z = tri_solve(L_B, s * Kg)
    return float(
        -0.5 * np.sum(summary.quad(m))
        + 0.5 * (gamma @ Kg - z @ z)
        - 0.5 * chol_logdet(L_B)
        - 0.5 * np.sum(summary.logdet)
        - 0.5 * np.sum(summary.lengths) * LOG_2PI)


class FtgpModel:
    """A fitted structured GP. Treat instances as immutable.

    Attributes of interest: ``mu`` and ``C`` (latent asymptote posterior
    over the observed configurations ``obs``), ``gamma``, ``lam``, ``K_x``
    and ``lml`` (log marginal likelihood).
    """

    def __init__(self, data, hypers, summary, K_x, W_obs):
        self.data = data
        self.hypers = hypers
        self.summary = summary
        self.obs = summary.obs
        self.K_x = K_x
        self.W_obs = W_obs
        m = hypers.mean
        n = len(self.obs)
        self.gamma = summary.gamma(m)
        self.lam = summary.lam
        self._pos = None
        if n == 0:
            self.chol_B = np.zeros((0, 0))
            self.sqrt_lam = np.zeros(0)
            self.C = np.zeros((0, 0))
            self.mu = np.zeros(0)
            self._w = np.zeros(0)
            self.lml = 0.0
            return
        s = np.sqrt(self.lam)
        self.sqrt_lam = s
        # B = Lambda^1/2 (K_x + Lambda^-1) Lambda^1/2, eigenvalues >= 1.
        B = s[:, None] * K_x * s[None, :]
        B.flat[::n + 1] += 1.0
        self.chol_B = jitchol(B)
        G = tri_solve(self.chol_B, s[:, None] * K_x)
        self.C = K_x - G.T @ G
        Cg = self.C @ self.gamma
        self.mu = m + Cg
        self._w = None
        self.lml = float(
            -0.5 * summary.quad(m).sum()
            + 0.5 * (self.gamma @ Cg)
            - np.log(self.chol_B.diagonal()).sum()
            - 0.5 * summary.logdet.sum()
            - 0.5 * summary.lengths.sum() * LOG_2PI)

    @property
    def w(self):
        """``K_x^-1 (mu - m)``, computed without inverting ``K_x``."""
        if self._w is None:
            s = self.sqrt_lam
            self._w = self.gamma - s * chol_solve(self.chol_B, s * (self.K_x @ self.gamma))
        return self._w

    @property
    def n_observed(self):
        return len(self.obs)

    def position(self, n):
        """Row of config ``n`` in ``mu``/``C``, or None when unobserved."""
        if self._pos is None:
            self._pos = {int(i): j for j, i in enumerate(self.obs)}
        return self._pos.get(int(n))


def fit(data, hypers):
    """Fit the structured GP to ``data`` under fixed ``hypers``."""
    if data.dim != hypers.matern.dim:
        raise ValueError("data and hyperparameter dimensions differ")
    summary = curve_summaries(data, hypers.decay)
    return assemble(data, hypers, summary)


def assemble(data, hypers, summary, K_x=None, W_obs=None):
    """Build a model from precomputed curve statistics (and optionally K_x)."""
    if W_obs is None:
        W_obs = warp_inputs(data.X[summary.obs], hypers.matern)
    if K_x is None:
        K_x = matern52_cross(W_obs, W_obs, hypers.matern, warped=True)
    return FtgpModel(data, hypers, summary, K_x, W_obs)


def log_marginal_likelihood(data, hypers):
    """log p(y | X) including the ``-(sum T_n / 2) log 2 pi`` constant."""
    return fit(data, hypers).lml


def joint_asymptote(model, X):
    """Joint posterior over the latent asymptotes at the rows of ``X``.

    Valid for any points, observed or not: at an observed ``x_n`` it returns
    ``mu_n`` and ``C_nn``.
    """
    p = model.hypers.matern
    X = np.atleast_2d(np.asarray(X, dtype=float))
    W = warp_inputs(X, p)
    K_ss = matern52_cross(W, W, p, warped=True)
    if model.n_observed == 0:
        return np.full(len(X), p.mean), K_ss
    K_os = matern52_cross(model.W_obs, W, p, warped=True)
    mean = p.mean + K_os.T @ model.w
    Q = tri_solve(model.chol_B, model.sqrt_lam[:, None] * K_os)
    return mean, K_ss - Q.T @ Q


def asymptote_marginals(model, X):
    """Posterior mean and variance of the asymptote at each row of ``X``."""
    p = model.hypers.matern
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if model.n_observed == 0:
        return np.full(len(X), p.mean), np.full(len(X), p.amplitude)
    K_os = matern52_cross(model.W_obs, warp_inputs(X, p), p, warped=True)
    mean = p.mean + K_os.T @ model.w
    Q = tri_solve(model.chol_B, model.sqrt_lam[:, None] * K_os)
    var = p.amplitude - np.sum(Q * Q, axis=0)
    return mean, np.maximum(var, 0.0)


def _check_point(x, dim):
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != (dim,):
        raise ValueError(f"expected a point of dimension {dim}")
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise ValueError("point outside the unit cube")
    return x


def predict_asymptote_new(model, x_star):
    x_star = _check_point(x_star, model.data.dim)
    mean, var = asymptote_marginals(model, x_star[None, :])
    return GaussianPrediction(float(mean[0]), float(var[0]))


def predict_asymptote_observed(model, n):
    if not 0 <= n < len(model.data):
        raise IndexError(f"unknown config index {n}")
    j = model.position(n)
    if j is None:
        return predict_asymptote_new(model, model.data.X[n])
    return GaussianPrediction(float(model.mu[j]), float(max(model.C[j, j], 0.0)))


def predict_curve_next(model, n, t_star, noise=True):
    """Predict curve ``n`` at future epochs ``t_star`` (all ``> T_n``).

    With ``noise=False`` the observation noise is left out, giving the
    posterior over the latent curve value.
    """
    if not 0 <= n < len(model.data):
        raise IndexError(f"unknown config index {n}")
    j = model.position(n)
    if j is None:
        raise ValueError(f"config {n} has no observations")
    decay = model.hypers.decay
    scalar = np.ndim(t_star) == 0
    ts = np.atleast_1d(np.asarray(t_star, dtype=float))
    y = model.data.curves[n]
    T = len(y)
    if np.any(ts <= T):
        raise ValueError(f"t_star must exceed the {T} observed epochs")
    L = model.summary.chol_t[:T, :T]
    u = model.summary.u[:T]
    t_obs = np.arange(1, T + 1, dtype=float)
    A = tri_solve(L, exp_decay_cov(t_obs[:, None], ts[None, :], decay))
    v = tri_solve(L, y)
    omega = 1.0 - A.T @ u
    mean = A.T @ v + omega * model.mu[j]
    cov = (exp_decay_cov(ts[:, None], ts[None, :], decay) - A.T @ A
           + model.C[j, j] * np.outer(omega, omega))
    if noise:
        cov[np.diag_indices_from(cov)] += decay.noise_var
    if scalar:
        return GaussianPrediction(float(mean[0]), float(max(cov[0, 0], 0.0)))
    return GaussianPrediction(mean, cov)


def asymptote_loading(model, n, t_star):
    """Slope of the expected next loss of curve ``n`` in its asymptote.

    Given the data, ``E[y(t_star) | f] = const + omega * f_n``, so the
    posterior covariance between any asymptote and ``y(t_star)`` is
    ``omega`` times its covariance with ``f_n``.
    """
    j = model.position(n)
    if j is None:
        raise ValueError(f"config {n} has no observations")
    T = len(model.data.curves[n])
    if not t_star > T:
        raise ValueError(f"t_star must exceed the {T} observed epochs")
    L = model.summary.chol_t[:T, :T]
    t_obs = np.arange(1, T + 1, dtype=float)
    a = tri_solve(L, exp_decay_cov(t_obs, float(t_star), model.hypers.decay))
    return float(1.0 - a @ model.summary.u[:T])


def predict_curve_new(model, x_star, t_star=1, noise=True):
    """Predict the loss of an unstarted configuration at epoch ``t_star``."""
    if not t_star >= 1:
        raise ValueError("t_star must be >= 1")
    asym = predict_asymptote_new(model, x_star)
    decay = model.hypers.decay
    var = asym.variance + exp_decay_cov(t_star, t_star, decay, same_index=noise)
    return GaussianPrediction(asym.mean, float(var))


def condition(model, target, y):
    """Return a model conditioned on one more observation.

    ``target`` is either a config index (the observation is the next epoch
    of that curve) or a point in the unit cube (a new configuration whose
    first epoch is ``y``). Hyperparameters are held fixed; only the touched
    curve's statistics and, for a new point, one row of ``K_x`` change.
    """
    data = model.data.copy()
    if np.ndim(target) == 0:
        n = int(target)
        data.append(n, y)
    else:
        n = data.add_config(target, config_id=_fresh_id(data))
        data.append(n, y)
    s = model.summary
    T_needed = len(data.curves[n])
    j = model.position(n)
    if T_needed > len(s.u) or (j is None and model.n_observed == 0):
        return fit(data, model.hypers)

    uy, yy, lam, logdet = _curve_stats(s.chol_t, s.u, data.curves[n], s.center)
    p = model.hypers.matern
    if j is not None:
        summary = CurveSummary(
            s.decay, s.obs, s.lengths.copy(), s.chol_t, s.u, s.center,
            s.uy.copy(), s.yy.copy(), s.lam.copy(), s.logdet.copy())
        summary.lengths[j] += 1
        summary.uy[j], summary.yy[j], summary.lam[j], summary.logdet[j] = uy, yy, lam, logdet
        return FtgpModel(data, model.hypers, summary, model.K_x, model.W_obs)

    summary = CurveSummary(
        s.decay, np.append(s.obs, n), np.append(s.lengths, 1), s.chol_t, s.u,
        s.center, np.append(s.uy, uy), np.append(s.yy, yy),
        np.append(s.lam, lam), np.append(s.logdet, logdet))
    w_new = warp_inputs(data.X[n], p)
    W_obs = np.vstack([model.W_obs, w_new])
    k_new = matern52_cross(W_obs, w_new, p, warped=True)[:, 0]
    K_x = np.empty((len(W_obs), len(W_obs)))
    K_x[:-1, :-1] = model.K_x
    K_x[-1, :] = k_new
    K_x[:, -1] = k_new
    return FtgpModel(data, model.hypers, summary, K_x, W_obs)


def _fresh_id(data):
    return ("fantasy", len(data))


@dataclass(eq=False)
class DenseOracleResult:
    log_density: float
    latent_mean: np.ndarray             # over all configs in data order
    latent_cov: np.ndarray
    asymptote_new: list = field(default_factory=list)   # GaussianPrediction per x_new
    curve_next: list = field(default_factory=list)      # per (n, t_star) query
    curve_new: list = field(default_factory=list)       # per (x_star, t_star) query


def dense_joint_oracle(data, hypers, x_new=(), next_queries=(), new_queries=(),
                       noise=True):
    """Exact Gaussian quantities from the explicit joint over ``(f, y)``.

    Builds ``K_t + O K_x O^T`` in full; cost ``O((sum T_n)^3)``. Test use only.
    """
    n_obs = data.n_obs
    if n_obs > DENSE_MAX_OBS:
        raise ValueError(f"dense oracle limited to {DENSE_MAX_OBS} observations")
    p, decay = hypers.matern, hypers.decay
    m = p.mean
    N = len(data)
    K_x = hyper_gram(data.X, p) if N else np.zeros((0, 0))
    lengths = data.lengths
    O = np.zeros((n_obs, N))
    K_t = np.zeros((n_obs, n_obs))
    starts = np.concatenate([[0], np.cumsum(lengths)])
    for i in range(N):
        a, b = starts[i], starts[i + 1]
        O[a:b, i] = 1.0
        if b > a:
            K_t[a:b, a:b] = curve_gram(np.arange(1, b - a + 1, dtype=float), decay)
    y = data.all_losses()
    S = K_t + O @ K_x @ O.T
    r = y - m
    if n_obs:
        L = la.cholesky(S, lower=True)
        alpha = la.cho_solve((L, True), r)
        log_density = float(-0.5 * r @ alpha - np.sum(np.log(np.diag(L)))
                            - 0.5 * n_obs * LOG_2PI)
        solve = lambda b: la.cho_solve((L, True), b)
    else:
        log_density = 0.0
        alpha = np.zeros(0)
        solve = lambda b: np.zeros_like(b)

    cross = K_x @ O.T                       # Cov(f, y)
    latent_mean = m + cross @ alpha
    latent_cov = K_x - cross @ solve(cross.T) if n_obs else K_x.copy()

    def condition_on_y(c, prior_var):
        return GaussianPrediction(float(m + c @ alpha), float(prior_var - c @ solve(c)))

    out = DenseOracleResult(log_density, latent_mean, latent_cov)
    for xs in x_new:
        k = matern52_cross(data.X, np.atleast_2d(xs), p)[:, 0] if N else np.zeros(0)
        out.asymptote_new.append(condition_on_y(O @ k, p.amplitude))
    for n, ts in next_queries:
        c = O @ K_x[:, n]
        a, b = starts[n], starts[n + 1]
        c[a:b] += exp_decay_cov(np.arange(1, b - a + 1, dtype=float), float(ts), decay)
        prior = K_x[n, n] + exp_decay_cov(ts, ts, decay, same_index=noise)
        out.curve_next.append(condition_on_y(c, prior))
    for xs, ts in new_queries:
        k = matern52_cross(data.X, np.atleast_2d(xs), p)[:, 0] if N else np.zeros(0)
        prior = p.amplitude + exp_decay_cov(ts, ts, decay, same_index=noise)
        out.curve_new.append(condition_on_y(O @ k, prior))
    return out
