"""Expected improvement, the candidate basket, and entropy-search scoring.

Each round keeps a basket of already-started configurations ("old") and
fresh candidates ("new"), both chosen by expected improvement at the
asymptote averaged over hyperparameter samples. The basket member to run is
the one whose next observation is expected to most reduce the entropy of
``P_min``, the distribution over which member has the lowest asymptote.
``P_min`` is estimated by Monte Carlo from the joint Gaussian posterior over
the basket's asymptotes.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .ftgp import (asymptote_loading, asymptote_marginals, condition, joint_asymptote,
                   predict_curve_new, predict_curve_next)
from .linalg import jitchol

DEFAULT_B_OLD = 10
DEFAULT_B_NEW = 3
DEFAULT_N_FANT = 5


def expected_improvement(mean, variance, best):
    """EI for minimization; vectorized over ``mean`` and ``variance``."""
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if np.any(variance < 0):
        raise ValueError("variance must be non-negative")
    sd = np.sqrt(variance)
    gain = best - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        z = gain / sd
        ei = sd * (z * norm.cdf(z) + norm.pdf(z))
    ei = np.where(sd > 0, ei, np.maximum(gain, 0.0))
    ei = np.maximum(ei, 0.0)
    return ei[()] if ei.ndim == 0 else ei


def best_asymptote(model):
    """Lowest posterior-mean asymptote over observed configurations.

    Falls back to the prior mean when nothing is observed.
    """
    if model.n_observed == 0:
        return model.hypers.mean
    return float(np.min(model.mu))


@dataclass(eq=False)
class Basket:
    """Candidate members for one decision.

    ``old`` holds config indices into the data, ``new`` holds unit-cube
    points; member ``k`` is ``old[k]`` for ``k < len(old)`` and
    ``new[k - len(old)]`` otherwise. ``means``/``variances`` are
    ``(n_samples, n_members)`` asymptote predictions.
    """

    old: np.ndarray
    new: np.ndarray
    points: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    ei: np.ndarray

    def __len__(self):
        return len(self.old) + len(self.new)

    def is_old(self, k):
        return k < len(self.old)


def build_basket(models, data, candidate_pool, b_old=DEFAULT_B_OLD, b_new=DEFAULT_B_NEW):
    """Pick the top ``b_old`` observed configs and ``b_new`` pool points by EI.

    EI at the asymptote is averaged over ``models`` (one per hyperparameter
    sample). Pool points that coincide with an existing configuration are
    excluded.
    """
    pool = np.atleast_2d(np.asarray(candidate_pool, dtype=float))
    if len(data):
        dup = np.any(np.all(np.abs(pool[:, None, :] - data.X[None, :, :]) < 1e-12, axis=-1),
                     axis=1)
        pool = pool[~dup]
    if b_new > 0 and not len(pool):
        raise ValueError("candidate pool is empty after excluding existing configs")

    obs = data.observed()
    bests = [best_asymptote(m) for m in models]

    old_ei = np.zeros((len(models), len(obs)))
    for s, m in enumerate(models):
        old_ei[s] = expected_improvement(m.mu, np.clip(np.diag(m.C), 0, None), bests[s])
    old_order = np.argsort(-old_ei.mean(0), kind="stable")[:min(b_old, len(obs))]
    old = obs[old_order]

    new_pts = np.empty((0, data.dim))
    new_ei = np.empty(0)
    if b_new > 0:
        pool_ei = np.zeros((len(models), len(pool)))
        for s, m in enumerate(models):
            mean, var = asymptote_marginals(m, pool)
            pool_ei[s] = expected_improvement(mean, var, bests[s])
        avg = pool_ei.mean(0)
        order = np.argsort(-avg, kind="stable")[:b_new]
        new_pts = pool[order]
        new_ei = avg[order]

    points = np.vstack([data.X[old], new_pts])
    means = np.zeros((len(models), len(points)))
    variances = np.zeros_like(means)
    for s, m in enumerate(models):
        means[s], variances[s] = asymptote_marginals(m, points)
    return Basket(old, new_pts, points, means, variances,
                  np.concatenate([old_ei.mean(0)[old_order], new_ei]))


@dataclass(eq=False)
class PminEstimate:
    probabilities: np.ndarray
    n_mc: int


@dataclass(eq=False)
class ActionScore:
    """Expected entropy reduction per basket member and its standard error
    over fantasies."""

    a: np.ndarray
    stderr: np.ndarray
    n_fant: int


class _MonteCarloDraws:
    """Fixed random numbers for P_min estimates (common random numbers)."""

    def __init__(self, n_mc, n_members, n_models, rng):
        self.assign = rng.integers(n_models, size=n_mc)
        self.z = rng.standard_normal((n_mc, n_members))
        self.rows = [np.flatnonzero(self.assign == s) for s in range(n_models)]


def _psd_chol(cov):
    K = len(cov)
    return jitchol(0.5 * (cov + cov.T) + 1e-12 * np.eye(K))


def _pmin_gaussians(means, chols, draws):
    """P_min from one joint Gaussian per hyperparameter sample."""
    n_mc, K = draws.z.shape
    counts = np.zeros(K)
    for s, rows in enumerate(draws.rows):
        if not len(rows):
            continue
        f = means[s] + draws.z[rows] @ chols[s].T
        hit = f == f.min(axis=1, keepdims=True)
        counts += np.sum(hit / hit.sum(axis=1, keepdims=True), axis=0)
    return counts / n_mc


def _joint(models, points):
    means, covs = zip(*(joint_asymptote(m, points) for m in models))
    return list(means), list(covs)


def _pmin(models, points, draws):
    means, covs = _joint(models, points)
    return _pmin_gaussians(means, [_psd_chol(c) for c in covs], draws)


def estimate_pmin(models, basket, n_mc, rng):
    """Probability that each basket member has the lowest asymptote.

    Each of ``n_mc`` draws picks a hyperparameter sample uniformly and then a
    joint draw of the basket asymptotes; ties split evenly.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    rng = np.random.default_rng(rng)
    points = basket.points if hasattr(basket, "points") else np.atleast_2d(basket)
    draws = _MonteCarloDraws(n_mc, len(points), len(models), rng)
    return PminEstimate(_pmin(models, points, draws), n_mc)


def entropy(p):
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def _fantasy_target(basket, k):
    return int(basket.old[k]) if basket.is_old(k) else basket.new[k - len(basket.old)]


def fantasy_update(model, basket, k, cov):
    """Effect of observing member ``k`` once more on the basket asymptotes.

    Returns ``(c, var)``: the posterior covariance between the basket
    asymptotes and the fantasy observation, and the observation's predictive
    variance. Conditioning on ``y = mean_y + sqrt(var) z`` moves the basket
    mean by ``c z / sqrt(var)`` and its covariance by ``-c c^T / var``,
    which is what :func:`condition` followed by :func:`joint_asymptote`
    gives, without refitting.
    """
    target = _fantasy_target(basket, k)
    if basket.is_old(k):
        t_next = len(model.data.curves[target]) + 1
        var = predict_curve_next(model, target, t_next).variance
        omega = asymptote_loading(model, target, t_next)
    else:
        var = predict_curve_new(model, target, 1).variance
        omega = 1.0
    return omega * cov[:, k], var


def score_actions(models, data, basket, n_fant=DEFAULT_N_FANT, n_mc=1000, rng=None):
    """Expected reduction in the entropy of P_min from running each member.

    For every member, ``n_fant`` fantasy observations are drawn (next epoch
    for started configs, first epoch for new ones), each hyperparameter
    sample's posterior is conditioned on its fantasy, and P_min is
    re-estimated. All P_min estimates in a call share one set of Monte Carlo
    draws, and a fantasy uses one standard normal across hyperparameter
    samples.
    """
    rng = np.random.default_rng(rng)
    K = len(basket)
    draws = _MonteCarloDraws(n_mc, K, len(models), rng)
    means, covs = _joint(models, basket.points)
    h0 = entropy(_pmin_gaussians(means, [_psd_chol(c) for c in covs], draws))
    fant_z = rng.standard_normal((K, n_fant))
    a = np.zeros(K)
    stderr = np.zeros(K)
    for k in range(K):
        try:
            shifts, chols = [], []
            for m, cov in zip(models, covs):
                c, var = fantasy_update(m, basket, k, cov)
                if not var > 0:
                    raise ValueError("degenerate fantasy variance")
                shifts.append(c / np.sqrt(var))
                chols.append(_psd_chol(cov - np.outer(c, c) / var))
        except (np.linalg.LinAlgError, ValueError):
            continue
        gains = []
        for i in range(n_fant):
            moved = [mu + fant_z[k, i] * sh for mu, sh in zip(means, shifts)]
            gains.append(h0 - entropy(_pmin_gaussians(moved, chols, draws)))
        a[k] = np.mean(gains)
        stderr[k] = np.std(gains, ddof=1) / np.sqrt(n_fant) if n_fant > 1 else 0.0
    return ActionScore(a, stderr, n_fant)


def score_actions_refit(models, data, basket, n_fant=DEFAULT_N_FANT, n_mc=1000, rng=None):
    """Same as :func:`score_actions` but conditions each model explicitly.

    Slower; uses identical random numbers, so results agree with
    :func:`score_actions` up to round-off.
    """
    rng = np.random.default_rng(rng)
    K = len(basket)
    draws = _MonteCarloDraws(n_mc, K, len(models), rng)
    h0 = entropy(_pmin(models, basket.points, draws))
    fant_z = rng.standard_normal((K, n_fant))
    a = np.zeros(K)
    stderr = np.zeros(K)
    for k in range(K):
        target = _fantasy_target(basket, k)
        gains = []
        for i in range(n_fant):
            conditioned = []
            for m in models:
                if basket.is_old(k):
                    pred = predict_curve_next(m, target, len(m.data.curves[target]) + 1)
                else:
                    pred = predict_curve_new(m, target, 1)
                y = pred.mean + np.sqrt(pred.variance) * fant_z[k, i]
                conditioned.append(condition(m, target, y))
            gains.append(h0 - entropy(_pmin(conditioned, basket.points, draws)))
        a[k] = np.mean(gains)
        stderr[k] = np.std(gains, ddof=1) / np.sqrt(n_fant) if n_fant > 1 else 0.0
    return ActionScore(a, stderr, n_fant)


def select_action(scores):
    """Index of the highest-scoring member; ties go to the lowest index."""
    a = scores.a if hasattr(scores, "a") else np.asarray(scores, dtype=float)
    if not len(a):
        raise ValueError("no scores")
    return int(np.argmax(a))
