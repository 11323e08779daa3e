"""
=========================
Driving training yourself
=========================
The optimizer never trains anything itself. It tells you which
configuration to run next, either a fresh one or a paused one to resume,
and you report back one validation loss per epoch. Between rounds the whole
optimizer state fits in one JSON file, so a trainer can crash, restart and
carry on exactly where it left off.

The "trainer" here is a toy: every configuration's loss decays
exponentially towards an asymptote that depends on a learning rate and a
regularization strength.

Run it from the repository root::

    python demos/ask_tell_loop.py
"""
print(__doc__)

import os
import tempfile

import numpy as np

from freezethaw.controller import OptState, Settings, observe, read_state, suggest, write_state

#############################################################################
# A toy training run
# ------------------
# The best asymptote lies near ``log10(lr) = -2.5`` with little
# regularization. Some configurations start badly but end well, which is
# exactly where pausing and later resuming pays off.

def train_one_epoch(x, epoch, rng):
    log_lr, reg = np.log10(x[0]), x[1]
    asymptote = 0.1 + 0.2 * (log_lr + 2.5) ** 2 + 0.5 * reg
    speed = 0.05 + 0.3 * reg
    return asymptote + 0.8 * np.exp(-speed * epoch) + 0.005 * rng.standard_normal()

#############################################################################
# Setting up
# ----------
# Bounds are given in the user's own units; the controller maps them to the
# unit cube. Smaller Monte Carlo settings keep this demo quick.

settings = Settings(n_mc=300, mcmc_samples=5, burn_in=20, pool_size=256)
state = OptState.create([[1e-4, 1e-1], [0.0, 1.0]], names=["learning_rate", "weight_decay"],
                        settings=settings, rng_seed=1)
state_path = os.path.join(tempfile.mkdtemp(), "state.json")
rng = np.random.default_rng(0)

#############################################################################
# The loop
# --------
# ``suggest`` returns an action; the trainer runs ``action.epochs`` epochs
# and reports each loss with ``observe``. The state is written after every
# round, as a long-running trainer would.

for round_ in range(30):
    action = suggest(state)
    data = state.data
    done = len(data.curves[data.index_of(action.config_id)]) if action.config_id in data.ids else 0
    for epoch in range(done + 1, done + action.epochs + 1):
        loss = train_one_epoch(action.x, epoch, rng)
        observe(state, action.config_id, epoch, loss)
    write_state(state, state_path)
    print(f"round {round_:2d}: {action.kind:6s} config {action.config_id:2d} "
          f"lr={action.x[0]:.2e} wd={action.x[1]:.2f} -> epoch {epoch:2d} loss {loss:.4f}")

#############################################################################
# Restarting from disk
# --------------------
# A fresh process reading the state file makes the same next decision as
# the process that wrote it.

restored = read_state(state_path)
a, b = suggest(state), suggest(restored)
print(f"\nnext action, live state:     {a.kind} config {a.config_id}")
print(f"next action, restored state: {b.kind} config {b.config_id}")
print(f"best loss seen so far {a.best_observed:.4f}; lowest predicted asymptote "
      f"{a.best_predicted:.4f} (config {a.best_predicted_id})")
print(f"\nepochs per configuration: "
      f"{[len(c) for c in state.data.curves]}")
