"""Freeze-thaw optimization loop as an ask/tell state machine.

``suggest`` runs one decision round (sample GP hyperparameters, fit one
model per sample, build the basket, score it, pick a member) and returns an
:class:`Action`; ``observe`` records one epoch's loss. A round's random
stream is derived from ``(rng_seed, round)`` so a saved state reproduces its
next suggestion exactly.

The hyperparameter chain is warm-started from the last sample of the
previous round. ``suggest`` stores the chain's new end point as pending and
``observe`` commits it, so repeated ``suggest`` calls on one state agree.
"""

import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.stats import qmc

from . import jsonio
from .acquisition import build_basket, score_actions, select_action
from .ftgp import CurveSet, fit
from .mcmc import HyperPriorSpec, HyperVector, sample_hypers

logger = logging.getLogger(__name__)

SCHEMA = "freezethaw.state"
SCHEMA_VERSION = 1


class StateError(ValueError):
    """A malformed, inconsistent or incompatible state document."""


class ObservationError(ValueError):
    pass


class RoundError(RuntimeError):
    """A decision round failed; the message carries the round number."""


@dataclass
class Settings:
    b_old: int = 10
    b_new: int = 3
    n_fant: int = 5
    n_mc: int = 1000
    mcmc_samples: int = 10
    burn_in: int = 50
    warm_burn_in: int = 1
    pool_size: int = 1000
    epochs_per_decision: int = 1

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ValueError(f"setting {f.name} must be an integer")
            setattr(self, f.name, int(v))
        if self.epochs_per_decision < 1 or self.mcmc_samples < 1 or self.n_mc < 1:
            raise ValueError("epochs_per_decision, mcmc_samples and n_mc must be >= 1")
        if self.b_old < 0 or self.b_new < 1 or self.n_fant < 1 or self.pool_size < 1:
            raise ValueError("invalid basket or pool settings")
        if self.burn_in < 0 or self.warm_burn_in < 0:
            raise ValueError("burn-in must be non-negative")


@dataclass
class Action:
    """What to run next: ``kind`` is ``"start"`` or ``"resume"``.

    ``x`` is in user coordinates, ``x_unit`` in the unit cube.
    ``best_observed`` is the lowest loss seen so far and ``best_predicted``
    the lowest posterior-mean asymptote (averaged over hyperparameter
    samples) among started configurations.
    """

    kind: str
    config_id: int
    x: np.ndarray
    epochs: int
    x_unit: np.ndarray = None
    best_observed: float = None
    best_predicted: float = None
    best_predicted_id: int = None


@dataclass
class OptState:
    bounds: np.ndarray                     # (D, 2) lower/upper per dimension
    names: list
    data: CurveSet
    settings: Settings = field(default_factory=Settings)
    rng_seed: int = 0
    round: int = 0
    next_id: int = 0
    chain: np.ndarray = None               # last committed hyperparameter sample
    pending: dict = None                   # outstanding action and chain end

    @classmethod
    def create(cls, bounds, names=None, settings=None, rng_seed=0):
        bounds = np.array(bounds, dtype=float, ndmin=2)
        if bounds.ndim != 2 or bounds.shape[1] != 2:
            raise ValueError("bounds must be a (D, 2) array of lower/upper pairs")
        if not np.all(np.isfinite(bounds)) or np.any(bounds[:, 1] <= bounds[:, 0]):
            raise ValueError("each bound needs finite lower < upper")
        D = len(bounds)
        names = list(names) if names is not None else [f"x{d}" for d in range(D)]
        if len(names) != D:
            raise ValueError("one name per dimension")
        return cls(bounds, names, CurveSet(dim=D), settings or Settings(), int(rng_seed))

    @property
    def dim(self):
        return len(self.bounds)

    def to_unit(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return np.clip((x - lo) / (hi - lo), 0.0, 1.0)

    def from_unit(self, u):
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return lo + np.asarray(u, dtype=float) * (hi - lo)


def candidate_pool(dim, size, rng):
    """Scrambled Sobol points in the unit cube."""
    m = int(np.ceil(np.log2(max(size, 2))))
    sobol = qmc.Sobol(dim, scramble=True, seed=rng)
    return sobol.random_base2(m)[:size]


def round_rng(state):
    return np.random.default_rng([state.rng_seed, state.round])


def _start_action(state, x_unit, **info):
    return Action("start", state.next_id, state.from_unit(x_unit),
                  state.settings.epochs_per_decision, np.array(x_unit), **info)


def suggest(state):
    """Run one decision round and return the next :class:`Action`.

    Deterministic given ``state``. Sets ``state.pending``.
    """
    settings = state.settings
    rng = round_rng(state)
    data = state.data
    pool = candidate_pool(state.dim, settings.pool_size, rng)
    space = HyperVector(state.dim)

    if data.n_obs == 0:
        # No data: the prior EI is the same everywhere, take the first free point.
        keep = [i for i, x in enumerate(pool)
                if not any(np.all(np.abs(x - xe) < 1e-12) for xe in data.X)]
        action = _start_action(state, pool[keep[0]])
        state.pending = {"kind": "start", "config_id": action.config_id,
                         "x_unit": action.x_unit, "chain": None}
        return action

    try:
        init = space.to_hypers(np.asarray(state.chain)) if state.chain is not None else None
        burn = settings.burn_in if init is None else settings.warm_burn_in
        samples = sample_hypers(data, HyperPriorSpec(), settings.mcmc_samples, burn,
                                rng, init=init)
        models = [fit(data, h) for h in samples]
        basket = build_basket(models, data, pool, settings.b_old, settings.b_new)
        scores = score_actions(models, data, basket, settings.n_fant, settings.n_mc, rng)
        k = select_action(scores)
    except Exception as exc:
        raise RoundError(f"round {state.round} failed: {exc}") from exc

    best_observed = float(np.min(data.all_losses()))
    mean_mu = np.mean([m.mu for m in models], axis=0)
    j = int(np.argmin(mean_mu))
    info = dict(best_observed=best_observed, best_predicted=float(mean_mu[j]),
                best_predicted_id=data.ids[models[0].obs[j]])
    if basket.is_old(k):
        n = int(basket.old[k])
        action = Action("resume", data.ids[n], state.from_unit(data.X[n]),
                        settings.epochs_per_decision, data.X[n].copy(), **info)
    else:
        action = _start_action(state, basket.new[k - len(basket.old)], **info)
    state.pending = {"kind": action.kind, "config_id": action.config_id,
                     "x_unit": action.x_unit, "chain": space.from_hypers(samples[-1])}
    logger.debug("round %d: %s %s", state.round, action.kind, action.config_id)
    return action


def observe(state, config_id, epoch, loss):
    """Record the loss of ``config_id`` after ``epoch``; returns ``state``.

    Epochs must be contiguous per configuration. A new configuration is
    accepted only when it is the pending ``start`` action.
    """
    try:
        loss = float(loss)
    except (TypeError, ValueError):
        raise ObservationError(f"loss must be a number, got {loss!r}") from None
    if not np.isfinite(loss):
        raise ObservationError("non-finite loss")
    if isinstance(epoch, bool) or not isinstance(epoch, (int, np.integer)):
        raise ObservationError(f"epoch must be an integer, got {epoch!r}")
    pending = state.pending
    data = state.data
    if config_id in data.ids:
        n = data.index_of(config_id)
        T = len(data.curves[n])
        if epoch != T + 1:
            kind = "duplicate" if epoch <= T else "non-contiguous"
            raise ObservationError(f"{kind} epoch {epoch} for config {config_id}; expected {T + 1}")
    elif pending is not None and pending["kind"] == "start" and pending["config_id"] == config_id:
        if epoch != 1:
            raise ObservationError(f"non-contiguous epoch {epoch} for new config; expected 1")
        n = data.add_config(pending["x_unit"], config_id=config_id)
        state.next_id = max(state.next_id, int(config_id) + 1)
    else:
        raise ObservationError(f"unknown config {config_id!r}")
    data.append(n, loss)
    if pending is not None and pending["config_id"] == config_id:
        if pending["chain"] is not None:
            state.chain = np.asarray(pending["chain"], dtype=float)
        state.pending = None
        state.round += 1
    return state


# -- persistence -------------------------------------------------------------

def state_to_dict(state):
    pending = None
    if state.pending is not None:
        p = state.pending
        pending = {"kind": p["kind"], "config_id": int(p["config_id"]),
                   "x_unit": [float(v) for v in p["x_unit"]],
                   "chain": None if p["chain"] is None else [float(v) for v in p["chain"]]}
    return {
        "schema": SCHEMA,
        "version": SCHEMA_VERSION,
        "settings": asdict(state.settings),
        "bounds": [{"name": n, "lower": float(lo), "upper": float(hi)}
                   for n, (lo, hi) in zip(state.names, state.bounds)],
        "rng_seed": int(state.rng_seed),
        "round": int(state.round),
        "next_id": int(state.next_id),
        "configs": [{"id": cid, "x_unit": [float(v) for v in x], "losses": [float(v) for v in y]}
                    for cid, x, y in zip(state.data.ids, state.data.X, state.data.curves)],
        "chain": None if state.chain is None else [float(v) for v in state.chain],
        "pending": pending,
    }


def save_state(state):
    """Serialize ``state`` to a JSON document (str)."""
    return jsonio.dumps(state_to_dict(state), indent=1) + "\n"


def load_state(document):
    """Parse a document written by :func:`save_state`.

    Raises
    ------
    StateError
        On malformed JSON, a wrong schema or version, or inconsistent content.
    """
    try:
        d = jsonio.loads(document)
    except ValueError as exc:
        raise StateError(f"state document is not valid JSON: {exc}") from None
    if not isinstance(d, dict) or d.get("schema") != SCHEMA:
        raise StateError("not a freeze-thaw state document")
    if d.get("version") != SCHEMA_VERSION:
        raise StateError(f"state schema version {d.get('version')!r} is not supported "
                         f"(expected {SCHEMA_VERSION})")
    try:
        settings = Settings(**d["settings"])
        names = [b["name"] for b in d["bounds"]]
        bounds = [[b["lower"], b["upper"]] for b in d["bounds"]]
        state = OptState.create(bounds, names, settings, int(d["rng_seed"]))
        configs = d["configs"]
        state.data = CurveSet(np.array([c["x_unit"] for c in configs], dtype=float).reshape(
            len(configs), state.dim), [c["losses"] for c in configs],
            [int(c["id"]) for c in configs])
        state.round = int(d["round"])
        state.next_id = int(d["next_id"])
        state.chain = None if d["chain"] is None else np.array(d["chain"], dtype=float)
        if state.chain is not None and len(state.chain) != HyperVector(state.dim).size:
            raise StateError("hyperparameter chain has the wrong length")
        p = d["pending"]
        if p is not None:
            if p["kind"] not in ("start", "resume"):
                raise StateError(f"bad pending action kind {p['kind']!r}")
            state.pending = {"kind": p["kind"], "config_id": int(p["config_id"]),
                             "x_unit": np.array(p["x_unit"], dtype=float),
                             "chain": None if p["chain"] is None
                             else np.array(p["chain"], dtype=float)}
    except StateError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise StateError(f"invalid state document: {exc!r}") from None
    return state


def write_state(state, path):
    """Atomically write ``state`` to ``path``."""
    text = save_state(state)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".state-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_state(path):
    with open(path) as fh:
        return load_state(fh.read())


# -- ask/tell line protocol ------------------------------------------------------

def action_message(action):
    msg = {"action": action.kind, "config_id": int(action.config_id),
           "x": [float(v) for v in action.x], "epochs": int(action.epochs)}
    if action.best_observed is not None:
        msg["best_observed"] = action.best_observed
        msg["best_predicted"] = action.best_predicted
    return msg


def handle_request(state, line, state_path=None):
    """Answer one protocol line; returns the response dict.

    Requests are ``{"op": "suggest"}`` and
    ``{"op": "observe", "config_id": int, "epoch": int, "loss": float}``.
    A failed request leaves ``state`` unchanged. When ``state_path`` is given
    the state is written after every suggestion and accepted observation,
    before replying.
    """
    try:
        req = jsonio.loads(line)
    except ValueError as exc:
        return {"status": "error", "message": f"malformed request: {exc}"}
    if not isinstance(req, dict):
        return {"status": "error", "message": "request must be a JSON object"}
    op = req.get("op")
    if op == "suggest":
        snapshot = state_to_dict(state)
        try:
            message = action_message(suggest(state))
            # The pending start must survive a restart, or its first observation is refused.
            if state_path is not None:
                write_state(state, state_path)
        except (RoundError, OSError) as exc:
            _restore(state, snapshot)
            return {"status": "error", "message": str(exc)}
        return message
    if op == "observe":
        missing = [k for k in ("config_id", "epoch", "loss") if k not in req]
        if missing:
            return {"status": "error", "message": f"observe needs {', '.join(missing)}"}
        snapshot = state_to_dict(state)
        try:
            observe(state, req["config_id"], req["epoch"], req["loss"])
            if state_path is not None:
                write_state(state, state_path)
        except (ObservationError, KeyError, OSError) as exc:
            _restore(state, snapshot)
            msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
            return {"status": "error", "message": msg}
        return {"status": "ok", "message": ""}
    return {"status": "error", "message": f"unknown op {op!r}"}


def _restore(state, snapshot):
    restored = load_state(jsonio.dumps(snapshot))
    state.__dict__.update(restored.__dict__)


def serve(state, instream, outstream, state_path=None):
    """Process protocol lines until end of input."""
    for line in instream:
        if not line.strip():
            continue
        response = handle_request(state, line, state_path)
        outstream.write(jsonio.dumps(response) + "\n")
        outstream.flush()
    return state
