import numpy as np
import pytest
from scipy.stats import norm

from freezethaw.acquisition import (ActionScore, build_basket, entropy, estimate_pmin,
                                    expected_improvement, fantasy_update, score_actions,
                                    score_actions_refit, select_action)
from freezethaw.ftgp import (CurveSet, Hypers, condition, fit, joint_asymptote,
                             predict_curve_new, predict_curve_next)
from freezethaw.kernels import ExpDecayParams, WarpedMaternParams
from freezethaw.mcmc import sample_hypers

from helpers import random_curves, random_hypers, two_member_fixture

EI_GAPS = np.arange(-2.0, 2.5, 0.5)
EI_VARIANCES = (0.01, 1.0, 4.0)


def mc_ei(mean, variance, best, n=1_000_000, seed=0):
    """Stratified Monte Carlo estimate of E[max(best - Y, 0)], Y ~ N(mean, variance).

    One uniform draw per stratum of width 1/n; plain sampling would have a
    standard error above 1e-3 at variance 4.
    """
    u = (np.arange(n) + np.random.default_rng(seed).random(n)) / n
    y = mean + np.sqrt(variance) * norm.ppf(u)
    return np.mean(np.maximum(best - y, 0.0))


def test_ei_examples():
    assert expected_improvement(1.0, 0.0, 0.5) == 0.0
    assert expected_improvement(0.2, 0.0, 0.5) == pytest.approx(0.3)
    assert expected_improvement(0.0, 1.0, 0.0) == pytest.approx(norm.pdf(0.0), abs=1e-15)
    assert expected_improvement(0.0, 1.0, 0.0) == pytest.approx(mc_ei(0.0, 1.0, 0.0), abs=1e-3)


@pytest.mark.parametrize("variance", EI_VARIANCES)
def test_ei_matches_monte_carlo(variance):
    for gap in EI_GAPS:
        assert expected_improvement(gap, variance, 0.0) == pytest.approx(
            mc_ei(gap, variance, 0.0), abs=1e-3)


def test_ei_monotone_in_variance_and_vectorized():
    v = np.linspace(0, 5, 200)
    ei = expected_improvement(np.zeros_like(v), v, 0.0)
    assert ei.shape == v.shape and np.all(np.diff(ei) >= 0)
    with pytest.raises(ValueError):
        expected_improvement(0.0, -1.0, 0.0)


def _models(seed=0, N=6, T=5, n_models=3):
    rng = np.random.default_rng(seed)
    data = random_curves(rng, N, T, 2)
    return [fit(data, random_hypers(rng, 2, mean=0.0)) for _ in range(n_models)], data


def test_basket_clamps_old_members():
    models, data = _models(N=2)
    b = build_basket(models, data, np.random.default_rng(0).random((50, 2)), b_old=10, b_new=3)
    assert len(b.old) == 2 and len(b.new) == 3 and len(b) == 5
    assert b.means.shape == (3, 5)


def test_basket_excludes_duplicates_and_requires_pool():
    models, data = _models()
    pool = np.vstack([data.X[:3], [[0.5, 0.5]]])
    b = build_basket(models, data, pool, b_old=2, b_new=3)
    assert len(b.new) == 1 and np.allclose(b.new[0], [0.5, 0.5])
    with pytest.raises(ValueError):
        build_basket(models, data, data.X[:2], b_old=2, b_new=1)


def test_basket_prefers_far_point_over_poor_config():
    h = Hypers(WarpedMaternParams(1.0, [0.2, 0.2], [1, 1], [1, 1], 0.5), ExpDecayParams(1.0, 1.0, 1e-3))
    data = CurveSet(dim=2)
    good = data.add_config([0.2, 0.2])
    poor = data.add_config([0.8, 0.8])
    for t in range(1, 11):
        data.append(good, 0.2 + 0.3 * np.exp(-t))
        data.append(poor, 1.5 + 0.3 * np.exp(-t))
    model = fit(data, h)
    pool = np.array([[0.8, 0.8 + 1e-6], [0.2, 0.95]])
    # Brute-force EI over the two pool points.
    mu, cov = joint_asymptote(model, pool)
    ei = expected_improvement(mu, np.diag(cov), model.mu.min())
    assert ei[1] > ei[0]
    b = build_basket([model], data, pool, b_old=2, b_new=1)
    assert np.allclose(b.new[0], pool[1])


def test_pmin_single_member():
    models, data = _models()
    assert estimate_pmin(models, data.X[:1], 100, 0).probabilities == pytest.approx([1.0])


def test_pmin_symmetric_pair():
    h = Hypers(WarpedMaternParams(1.0, [0.1], [1.0], [1.0], 0.0), ExpDecayParams())
    model = fit(CurveSet(dim=1), h)
    est = estimate_pmin([model], np.array([[0.2], [0.8]]), 10_000, 1)
    sd = np.sqrt(0.25 / 10_000)
    assert abs(est.probabilities[0] - 0.5) <= 3 * sd
    assert est.probabilities.sum() == pytest.approx(1.0, abs=1e-12)


def test_pmin_near_deterministic():
    h = Hypers(WarpedMaternParams(1.0, [0.1], [1.0], [1.0], 0.0), ExpDecayParams(1.0, 1.0, 1e-12))
    data = CurveSet(dim=1)
    for x, f in ((0.1, 0.0), (0.9, 1.0)):
        n = data.add_config([x])
        for t in range(1, 200):
            data.append(n, f)
    model = fit(data, h)
    est = estimate_pmin([model], data.X, 2000, 0)
    assert est.probabilities == pytest.approx([1.0, 0.0], abs=1e-3)


def test_pmin_reproducible_and_normalized():
    models, data = _models()
    a = estimate_pmin(models, data.X, 500, 7).probabilities
    b = estimate_pmin(models, data.X, 500, 7).probabilities
    assert np.array_equal(a, b)
    assert a.sum() == pytest.approx(1.0, abs=1e-12) and np.all(a >= 0)
    with pytest.raises(ValueError):
        estimate_pmin(models, data.X, 0, 7)


def test_entropy_examples():
    assert entropy([1.0, 0.0, 0.0]) == 0.0
    assert entropy(np.full(7, 1 / 7)) == pytest.approx(np.log(7))
    assert entropy([0.5, 0.25, 0.25]) == pytest.approx(1.03972, abs=1e-5)


def test_select_action():
    assert select_action(np.array([0.1, 0.5, 0.2])) == 1
    assert select_action(np.full(4, 0.3)) == 0
    a = np.array([0.4, -0.1, 0.7, 0.2])
    assert select_action(a + 12.5) == select_action(a)
    assert select_action(ActionScore(a, np.zeros(4), 5)) == 2
    with pytest.raises(ValueError):
        select_action(np.array([]))


def test_two_member_fixture_scores():
    models, data, basket = two_member_fixture()
    assert models[0].C[0, 0] < 1e-4 and basket.variances[0, 1] > 0.5
    s = score_actions(models, data, basket, n_fant=10, n_mc=10_000, rng=0)
    assert np.all(s.a >= -3 * s.stderr - 1e-12)
    assert abs(s.a[0]) <= max(3 * s.stderr[0], 0.01)
    assert s.a[1] > s.a[0]


def test_default_fantasy_count():
    models, data, basket = two_member_fixture()
    assert score_actions(models, data, basket, n_mc=200, rng=0).n_fant == 5


@pytest.mark.parametrize("seed", range(3))
def test_rank_one_scoring_matches_explicit_conditioning(seed):
    rng = np.random.default_rng(seed)
    data = random_curves(rng, 8, 6, 2)
    samples = sample_hypers(data, n_samples=3, burn_in=5, rng=seed)
    models = [fit(data, h) for h in samples]
    basket = build_basket(models, data, rng.random((100, 2)), b_old=4, b_new=2)
    fast = score_actions(models, data, basket, n_fant=3, n_mc=2000, rng=seed)
    slow = score_actions_refit(models, data, basket, n_fant=3, n_mc=2000, rng=seed)
    assert np.allclose(fast.a, slow.a, atol=1e-9)


def test_fantasy_update_matches_conditioning():
    rng = np.random.default_rng(3)
    data = random_curves(rng, 6, 5, 2)
    model = fit(data, random_hypers(rng, 2))
    basket = build_basket([model], data, rng.random((50, 2)), b_old=3, b_new=2)
    mean, cov = joint_asymptote(model, basket.points)
    for k in range(len(basket)):
        c, var = fantasy_update(model, basket, k, cov)
        target = int(basket.old[k]) if basket.is_old(k) else basket.new[k - len(basket.old)]
        y = 0.123
        cm, cc = joint_asymptote(condition(model, target, y), basket.points)
        # Conditioning on y shifts the mean along c.
        assert np.allclose(cc, cov - np.outer(c, c) / var, atol=1e-10)
        shift = cm - mean
        j = np.argmax(np.abs(c))
        assert np.allclose(shift, c * shift[j] / c[j], atol=1e-9)


def test_posterior_mean_fantasy_never_increases_own_variance():
    rng = np.random.default_rng(4)
    for _ in range(10):
        data = random_curves(rng, 5, 5, 2)
        model = fit(data, random_hypers(rng, 2))
        basket = build_basket([model], data, rng.random((30, 2)), b_old=3, b_new=2)
        for k in range(len(basket)):
            target = int(basket.old[k]) if basket.is_old(k) else basket.new[k - len(basket.old)]
            before = joint_asymptote(model, basket.points[k:k + 1])[1][0, 0]
            if basket.is_old(k):
                y = predict_curve_next(model, target, len(data.curves[target]) + 1).mean
            else:
                y = predict_curve_new(model, target, 1).mean
            after = joint_asymptote(condition(model, target, y), basket.points[k:k + 1])[1][0, 0]
            assert after <= before + 1e-9


def test_resumes_curve_converging_to_best_asymptote():
    h = Hypers(WarpedMaternParams(1.0, [0.1, 0.1], [1, 1], [1, 1], 0.6), ExpDecayParams(2.0, 0.5, 1e-6))
    data = CurveSet(dim=2)
    promising = data.add_config([0.5, 0.5])
    for t in range(1, 4):
        data.append(promising, 0.2 + 0.8 * np.exp(-0.3 * t))
    for x, f in (([0.1, 0.9], 0.9), ([0.9, 0.1], 1.0)):
        n = data.add_config(x)
        for t in range(1, 41):
            data.append(n, f + 0.5 * np.exp(-0.5 * t))
    models = [fit(data, h)]
    basket = build_basket(models, data, np.empty((0, 2)), b_old=10, b_new=0)
    assert len(basket) == 3
    s = score_actions(models, data, basket, n_fant=10, n_mc=10_000, rng=0)
    assert basket.old[select_action(s)] == promising
