"""Random fixtures shared by the test modules."""

import numpy as np

from freezethaw.ftgp import CurveSet, Hypers
from freezethaw.kernels import ExpDecayParams, WarpedMaternParams


def random_hypers(rng, dim, mean=None):
    matern = WarpedMaternParams(
        amplitude=rng.uniform(0.3, 2.0),
        length_scales=rng.uniform(0.2, 2.0, dim),
        warp_a=rng.uniform(0.5, 2.0, dim),
        warp_b=rng.uniform(0.5, 2.0, dim),
        mean=rng.uniform(-0.5, 0.5) if mean is None else mean)
    decay = ExpDecayParams(rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(1e-3, 0.05))
    return Hypers(matern, decay)


def random_curves(rng, N, T, dim, mixed=True, min_len=1):
    """N configs with decaying noisy curves of length <= T (exactly T if not mixed)."""
    data = CurveSet(dim=dim)
    for _ in range(N):
        x = rng.random(dim)
        n = data.add_config(x)
        length = rng.integers(min_len, T + 1) if mixed else T
        f = rng.normal()
        c, lam = rng.uniform(0.5, 2), rng.uniform(0.05, 1)
        for t in range(1, length + 1):
            data.append(n, f + c * np.exp(-lam * t) + 0.05 * rng.normal())
    return data


def random_instance(seed, N, T, dim=2, mixed=True):
    rng = np.random.default_rng(seed)
    data = random_curves(rng, N, T, dim, mixed)
    return data, random_hypers(rng, dim)


def two_member_fixture(n_epochs=40):
    """One long curve converged near 0.3 and one unstarted, far, uncertain point.

    Returns ``(models, data, basket)``. Member 0 (the curve) has a nearly
    known asymptote; member 1 has the prior variance 1 around mean 0.5, so
    the two minima overlap.
    """
    from freezethaw.acquisition import build_basket
    from freezethaw.ftgp import fit

    h = Hypers(WarpedMaternParams(1.0, [0.1, 0.1], [1.0, 1.0], [1.0, 1.0], 0.5),
               ExpDecayParams(2.0, 0.5, 1e-6))
    data = CurveSet(dim=2)
    n = data.add_config([0.1, 0.1])
    for t in range(1, n_epochs + 1):
        data.append(n, 0.3 + 0.5 * np.exp(-0.5 * t))
    models = [fit(data, h)]
    basket = build_basket(models, data, np.array([[0.9, 0.9]]), b_old=10, b_new=1)
    return models, data, basket
