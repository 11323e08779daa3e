"""Synthetic training-curve benchmarks.

A synthetic objective has a known asymptote ``f(x)`` and produces curves

    loss(x, t) = f(x) + c(x) * exp(-lambda(x) * t) + noise

with ``lambda(x)`` log-uniform on [0.05, 1] and ``c(x)`` uniform on [0.5, 2],
drawn per configuration from a hash of ``x`` and the objective seed. Noise
is likewise a deterministic function of ``(seed, x, t)``, so a curve can be
replayed or extended in any order.

Two drivers produce :class:`RunTrace` records, one row per decision:
:func:`run_freeze_thaw` drives the controller; :func:`run_baseline_ei` is
plain EI Bayesian optimization where every evaluation trains a new
configuration for a fixed number of epochs and the GP sees its final loss.
"""

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .acquisition import best_asymptote, expected_improvement
from .controller import OptState, Settings, candidate_pool, observe, suggest
from .ftgp import CurveSet, asymptote_marginals, fit
from .kernels import ExpDecayParams, OuParams, exp_decay_cov, ou_cov
from .mcmc import HyperPriorSpec, HyperVector, sample_hypers

FAMILIES = ("branin-decay", "random-gp-decay", "pmf-analog")
DECAY_RANGE = (0.05, 1.0)
AMPLITUDE_RANGE = (0.5, 2.0)

TRACE_COLUMNS = ("decision", "kind", "cumulative_epochs", "config_id", "epoch",
                 "observed_loss", "best_observed", "incumbent_id",
                 "best_true_asymptote_regret", "incumbent_regret")


def _hash_uniforms(seed, x, tag, n=1):
    h = hashlib.blake2b(digest_size=16)
    h.update(np.int64(seed).tobytes())
    h.update(np.ascontiguousarray(x, dtype=np.float64).tobytes())
    h.update(str(tag).encode())
    rng = np.random.default_rng(int.from_bytes(h.digest(), "little"))
    return rng.random(n)


def branin_rescaled(x):
    """Branin on [0, 1]^2, shifted and scaled to roughly zero mean, unit spread."""
    x = np.atleast_2d(x)
    x1 = 15.0 * x[..., 0] - 5.0
    x2 = 15.0 * x[..., 1]
    a = x2 - 5.1 * x1 ** 2 / (4 * np.pi ** 2) + 5.0 * x1 / np.pi - 6.0
    return (a ** 2 + (10.0 - 10.0 / (8 * np.pi)) * np.cos(x1) - 44.81) / 51.95


BRANIN_MIN = (0.397887357729738 - 54.81) / 51.95


def _pmf_analog(x):
    x = np.atleast_2d(x)
    u = x - np.array([0.35, 0.2, 0.6])
    # Narrow valley along u1 = 0.5 u0.
    return 0.8 + 0.4 * u[..., 0] ** 2 + 0.2 * u[..., 2] ** 2 + 8.0 * (u[..., 1] - 0.5 * u[..., 0]) ** 2


class _RandomFeatureGP:
    """A Matern-5/2-like GP draw via random Fourier features."""

    def __init__(self, dim, seed, n_features=500, length=0.3):
        rng = np.random.default_rng([seed, dim, 7])
        # Student-t spectral density with 5 degrees of freedom gives Matern-5/2.
        g = rng.standard_normal((n_features, dim))
        chi = rng.chisquare(5, size=(n_features, 1))
        self.omega = g / np.sqrt(chi / 5) / length
        self.phase = rng.uniform(0, 2 * np.pi, n_features)
        self.w = rng.standard_normal(n_features) * np.sqrt(2.0 / n_features)

    def __call__(self, x):
        x = np.atleast_2d(x)
        return np.cos(x @ self.omega.T + self.phase) @ self.w


@dataclass(eq=False)
class SyntheticObjective:
    family: str
    dim: int
    seed: int
    asymptote_fn: object
    obs_noise: float = 0.01
    f_min: float = None
    x_min: np.ndarray = None

    def decay_rate_fn(self, x):
        lo, hi = DECAY_RANGE
        u = _hash_uniforms(self.seed, x, "decay")[0]
        return float(np.exp(np.log(lo) + u * (np.log(hi) - np.log(lo))))

    def amplitude_fn(self, x):
        lo, hi = AMPLITUDE_RANGE
        return float(lo + (hi - lo) * _hash_uniforms(self.seed, x, "amplitude")[0])

    def asymptote(self, x):
        return float(self.asymptote_fn(np.asarray(x, dtype=float))[0])

    def expected_curve(self, x, t):
        return self.asymptote(x) + self.amplitude_fn(x) * np.exp(-self.decay_rate_fn(x) * np.asarray(t))

    def curve(self, x, t):
        """Observed loss of configuration ``x`` after epoch ``t``."""
        mean = self.expected_curve(x, t)
        if self.obs_noise == 0:
            return float(mean)
        u = _hash_uniforms(self.seed, x, f"noise{int(t)}", 2)
        # Box-Muller from the hashed uniforms.
        z = np.sqrt(-2.0 * np.log(1.0 - u[0])) * np.cos(2 * np.pi * u[1])
        return float(mean + self.obs_noise * z)

    def regret(self, x):
        return self.asymptote(x) - self.f_min


def _grid_minimum(fn, dim, seed):
    """Dense quasi-random search followed by local polishing of the best points."""
    pts = qmc.Sobol(dim, scramble=True, seed=seed).random_base2(16)
    vals = fn(pts)
    best_x, best_f = pts[np.argmin(vals)], float(np.min(vals))
    for i in np.argsort(vals)[:10]:
        res = optimize.minimize(lambda z: float(fn(z)[0]), pts[i], method="L-BFGS-B",
                                bounds=[(0, 1)] * dim)
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
    return best_f, np.asarray(best_x)


def make_objective(family, dim=None, seed=0, obs_noise=0.01):
    """Build a synthetic objective.

    ``branin-decay`` (dim 2), ``random-gp-decay`` (dim 1-5, default 3) or
    ``pmf-analog`` (dim 3).
    """
    if family == "branin-decay":
        if dim not in (None, 2):
            raise ValueError("branin-decay is 2-dimensional")
        xs = np.array([[np.pi, 2.275], [-np.pi, 12.275], [9.42478, 2.475]])
        x_min = np.array([(xs[0, 0] + 5) / 15, xs[0, 1] / 15])
        return SyntheticObjective(family, 2, seed, branin_rescaled, obs_noise,
                                  BRANIN_MIN, x_min)
    if family == "pmf-analog":
        if dim not in (None, 3):
            raise ValueError("pmf-analog is 3-dimensional")
        return SyntheticObjective(family, 3, seed, _pmf_analog, obs_noise, 0.8,
                                  np.array([0.35, 0.2, 0.6]))
    if family == "random-gp-decay":
        dim = 3 if dim is None else int(dim)
        if not 1 <= dim <= 5:
            raise ValueError("random-gp-decay supports 1 to 5 dimensions")
        fn = _RandomFeatureGP(dim, seed)
        f_min, x_min = _grid_minimum(fn, dim, seed)
        return SyntheticObjective(family, dim, seed, fn, obs_noise, f_min, x_min)
    raise ValueError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")


# -- traces ---------------------------------------------------------------------

@dataclass(eq=False)
class RunTrace:
    method: str
    seed: int
    rows: list = field(default_factory=list)

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def epochs_to_regret(self, tol, column="best_true_asymptote_regret"):
        """First cumulative epoch count with regret <= tol, or inf.

        ``column`` is ``"best_true_asymptote_regret"`` (best configuration
        run so far) or ``"incumbent_regret"`` (configuration with the lowest
        observed loss).
        """
        for r in self.rows:
            if r[column] <= tol:
                return r["cumulative_epochs"]
        return np.inf


class _Recorder:
    """Running summaries of a run.

    Two regrets are tracked: the lowest true regret among all
    configurations run so far, and the true regret of the incumbent (the
    configuration with the lowest observed loss).
    """

    def __init__(self, obj, trace):
        self.obj = obj
        self.trace = trace
        self.best = np.inf
        self.incumbent = None
        self.incumbent_regret = np.inf
        self.best_regret = np.inf
        self.regrets = {}
        self.cumulative = 0

    def see(self, config_id, x, loss):
        self.cumulative += 1
        if config_id not in self.regrets:
            self.regrets[config_id] = float(self.obj.regret(x))
            self.best_regret = min(self.best_regret, self.regrets[config_id])
        if loss < self.best:
            self.best = loss
            self.incumbent = config_id
            self.incumbent_regret = self.regrets[config_id]

    def record(self, kind, config_id, epoch, loss):
        self.trace.rows.append({
            "decision": len(self.trace.rows), "kind": kind,
            "cumulative_epochs": self.cumulative, "config_id": int(config_id),
            "epoch": int(epoch), "observed_loss": float(loss),
            "best_observed": float(self.best), "incumbent_id": int(self.incumbent),
            "best_true_asymptote_regret": self.best_regret,
            "incumbent_regret": self.incumbent_regret})


def run_freeze_thaw(obj, budget_epochs, settings=None, seed=0, state=None):
    """Drive the freeze-thaw controller until ``budget_epochs`` are spent."""
    if budget_epochs < 1:
        raise ValueError("budget must be >= 1")
    if state is None:
        state = OptState.create([[0.0, 1.0]] * obj.dim, settings=settings, rng_seed=seed)
    trace = RunTrace("freeze-thaw", seed)
    rec = _Recorder(obj, trace)
    while rec.cumulative < budget_epochs:
        try:
            action = suggest(state)
        except Exception as exc:
            raise RuntimeError(f"freeze-thaw run (seed {seed}) failed after "
                               f"{rec.cumulative} epochs: {exc}") from exc
        n_epochs = min(action.epochs, budget_epochs - rec.cumulative)
        x = action.x_unit
        for _ in range(n_epochs):
            if action.config_id in state.data.ids:
                epoch = len(state.data.curves[state.data.index_of(action.config_id)]) + 1
            else:
                epoch = 1
            loss = obj.curve(x, epoch)
            observe(state, action.config_id, epoch, loss)
            rec.see(action.config_id, x, loss)
        rec.record(action.kind, action.config_id, epoch, loss)
    return trace


def run_baseline_ei(obj, budget_epochs, epochs_per_eval, seed=0, settings=None):
    """Fixed-epoch EI Bayesian optimization on the same GP machinery.

    Every evaluation starts a new configuration and trains it for
    ``epochs_per_eval`` epochs; the GP is fitted to final-epoch losses (one
    observation per configuration).
    """
    if epochs_per_eval < 1:
        raise ValueError("epochs_per_eval must be >= 1")
    if budget_epochs < 1:
        raise ValueError("budget must be >= 1")
    settings = settings or Settings()
    trace = RunTrace("baseline-ei", seed)
    rec = _Recorder(obj, trace)
    data = CurveSet(dim=obj.dim)
    space = HyperVector(obj.dim)
    chain = None
    k = 0
    while rec.cumulative + epochs_per_eval <= budget_epochs:
        # Same per-round stream as the controller, so both methods start alike.
        rng = np.random.default_rng([seed, k])
        pool = candidate_pool(obj.dim, settings.pool_size, rng)
        if len(data):
            dup = np.any(np.all(np.abs(pool[:, None, :] - data.X[None]) < 1e-12, -1), 1)
            pool = pool[~dup]
        if data.n_obs == 0:
            x = pool[0]
        else:
            burn = settings.burn_in if chain is None else settings.warm_burn_in
            samples = sample_hypers(data, HyperPriorSpec(), settings.mcmc_samples, burn,
                                    rng, init=chain)
            chain = samples[-1]
            ei = np.zeros(len(pool))
            for h in samples:
                model = fit(data, h)
                mean, var = asymptote_marginals(model, pool)
                ei += expected_improvement(mean, var, best_asymptote(model))
            x = pool[int(np.argmax(ei))]
        for t in range(1, epochs_per_eval + 1):
            loss = obj.curve(x, t)
            rec.see(k, x, loss)
        n = data.add_config(x, config_id=k)
        data.append(n, loss)
        rec.record("start", k, epochs_per_eval, loss)
        k += 1
    return trace


# -- kernel and curve samples -----------------------------------------------------

def _psd_sqrt(K):
    w, V = np.linalg.eigh(0.5 * (K + K.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def decay_basis(times, p, n_samples, rng):
    """Basis functions ``exp(-lambda t)`` with ``lambda ~ Gamma(alpha, rate beta)``.

    Returns ``(lambdas, values)`` with ``values`` of shape ``(len(times), n)``.
    """
    rng = np.random.default_rng(rng)
    lam = rng.gamma(p.alpha, 1.0 / p.beta, size=n_samples)
    return lam, np.exp(-np.outer(np.asarray(times, dtype=float), lam))


def sample_decay_prior(times, p, n_samples, rng):
    """Draws from the zero-mean GP with the exponential-decay kernel."""
    rng = np.random.default_rng(rng)
    t = np.asarray(times, dtype=float)
    K = exp_decay_cov(t[:, None], t[None, :], p)
    K[np.diag_indices_from(K)] += p.noise_var
    return _psd_sqrt(K) @ rng.standard_normal((len(t), n_samples))


def sample_training_curves(times, p, ou=OuParams(), n_samples=5, rng=None,
                           start_range=(0.5, 1.5)):
    """Decay-GP draws conditioned on a positive value at ``t = 0``, plus OU noise.

    ``times`` must start at 0.
    """
    rng = np.random.default_rng(rng)
    t = np.asarray(times, dtype=float)
    if t[0] != 0:
        raise ValueError("times must start at 0")
    starts = rng.uniform(*start_range, size=n_samples)
    k0 = exp_decay_cov(t, 0.0, p)
    mean = np.outer(k0 / k0[0], starts)
    K = exp_decay_cov(t[:, None], t[None, :], p) - np.outer(k0, k0) / k0[0]
    K = K + ou_cov(t[:, None], t[None, :], ou)
    return mean + _psd_sqrt(K) @ rng.standard_normal((len(t), n_samples))


# -- CSV ------------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def emit_csv(rows, path, columns):
    """Write dict rows (or sequences) as CSV with a header row.

    Floats are written with 17 significant digits.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for r in rows:
            values = [r[c] for c in columns] if isinstance(r, dict) else list(r)
            writer.writerow([_fmt(v) for v in values])


def write_trace(trace, path):
    emit_csv(trace.rows, path, TRACE_COLUMNS)


def write_samples(times, samples, path, prefix="sample"):
    """Samples matrix ``(len(times), n)`` as columns ``t, sample_0, ...``."""
    samples = np.asarray(samples)
    columns = ["t"] + [f"{prefix}_{i}" for i in range(samples.shape[1])]
    rows = [[float(t)] + [float(v) for v in row] for t, row in zip(times, samples)]
    emit_csv(rows, path, columns)


def read_csv(path):
    """Read a CSV written by :func:`emit_csv` into a list of dicts of strings."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(traces, budget, step=None):
    """Median best observed loss and regret across runs at each epoch count.

    Returns rows ``(method, cumulative_epochs, n_runs, median_best_observed,
    median_regret)``.
    """
    step = step or 1
    out = []
    for method in sorted({t.method for t in traces}):
        runs = [t for t in traces if t.method == method]
        for e in range(step, budget + 1, step):
            best, reg = [], []
            for t in runs:
                done = [r for r in t.rows if r["cumulative_epochs"] <= e]
                if done:
                    best.append(done[-1]["best_observed"])
                    reg.append(done[-1]["best_true_asymptote_regret"])
            if len(best) == len(runs):
                out.append({"method": method, "cumulative_epochs": e, "n_runs": len(runs),
                            "median_best_observed": float(np.median(best)),
                            "median_regret": float(np.median(reg))})
    return out


SUMMARY_COLUMNS = ("method", "cumulative_epochs", "n_runs", "median_best_observed",
                   "median_regret")
