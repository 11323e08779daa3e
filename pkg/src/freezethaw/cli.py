"""Command-line entry points: ``bench``, ``serve``, ``kernel-samples``, ``inspect``."""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import bench
from .controller import (OptState, Settings, StateError, read_state, serve,
                         write_state)
from .ftgp import asymptote_marginals, fit
from .kernels import ExpDecayParams, OuParams
from .mcmc import HyperVector, initial_hypers, observed_bounds


def _add_settings(p):
    d = Settings()
    p.add_argument("--basket-old", type=int, default=d.b_old)
    p.add_argument("--basket-new", type=int, default=d.b_new)
    p.add_argument("--n-fant", type=int, default=d.n_fant)
    p.add_argument("--n-mc", type=int, default=d.n_mc)
    p.add_argument("--mcmc-samples", type=int, default=d.mcmc_samples)
    p.add_argument("--burn-in", type=int, default=d.burn_in)
    p.add_argument("--pool-size", type=int, default=d.pool_size)
    p.add_argument("--epochs-per-decision", type=int, default=d.epochs_per_decision)


def _settings(args):
    return Settings(b_old=args.basket_old, b_new=args.basket_new, n_fant=args.n_fant,
                    n_mc=args.n_mc, mcmc_samples=args.mcmc_samples, burn_in=args.burn_in,
                    pool_size=args.pool_size, epochs_per_decision=args.epochs_per_decision)


def build_parser():
    parser = argparse.ArgumentParser(prog="freezethaw",
                                     description="Freeze-thaw Bayesian optimization.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="run synthetic benchmarks and write trace CSVs")
    p.add_argument("--family", required=True, choices=bench.FAMILIES)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--budget", type=int, default=300, help="epochs per freeze-thaw run")
    p.add_argument("--baseline", action="store_true", help="also run the fixed-epoch EI baseline")
    p.add_argument("--epochs-per-eval", type=int, default=30)
    p.add_argument("--baseline-budget", type=int, default=None,
                   help="epochs per baseline run (default: --budget)")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--n-seeds", type=int, default=5)
    p.add_argument("--obs-noise", type=float, default=0.01)
    p.add_argument("--out", required=True, help="output directory")
    _add_settings(p)

    p = sub.add_parser("serve", help="ask/tell protocol on stdin/stdout")
    p.add_argument("--bounds", help="JSON list of {name, lower, upper}")
    p.add_argument("--state", help="state file; resumed if it exists, written after every change")
    p.add_argument("--seed", type=int, default=0)
    _add_settings(p)

    p = sub.add_parser("kernel-samples", help="draws from the decay-kernel GP prior as CSV")
    p.add_argument("--mode", choices=("prior", "basis", "curves"), default="prior",
                   help="prior draws, exp(-lambda t) basis functions, or positive-start "
                        "curves with OU noise")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--noise-var", type=float, default=0.0)
    p.add_argument("--ou-variance", type=float, default=OuParams().variance)
    p.add_argument("--ou-length", type=float, default=OuParams().length)
    p.add_argument("--t-max", type=int, default=100)
    p.add_argument("--n-samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("inspect", help="summarize a saved state")
    p.add_argument("--state", required=True)
    return parser


def cmd_bench(args):
    os.makedirs(args.out, exist_ok=True)
    settings = _settings(args)
    traces = []
    for seed in range(args.seed, args.seed + args.n_seeds):
        obj = bench.make_objective(args.family, args.dim, seed, args.obs_noise)
        runs = [("freeze-thaw", lambda: bench.run_freeze_thaw(obj, args.budget, settings, seed))]
        if args.baseline:
            budget = args.baseline_budget or args.budget
            runs.append(("baseline-ei", lambda: bench.run_baseline_ei(
                obj, budget, args.epochs_per_eval, seed, settings)))
        for name, run in runs:
            trace = run()
            bench.write_trace(trace, os.path.join(args.out, f"trace_{name}_seed{seed}.csv"))
            traces.append(trace)
            print(f"{name} seed {seed}: best observed {trace.rows[-1]['best_observed']:.6g}, "
                  f"regret {trace.rows[-1]['best_true_asymptote_regret']:.6g}", file=sys.stderr)
    budget = max(args.budget, args.baseline_budget or 0)
    step = settings.epochs_per_decision
    bench.emit_csv(bench.summarize(traces, budget, step), os.path.join(args.out, "summary.csv"),
                   bench.SUMMARY_COLUMNS)
    return 0


def _read_bounds(path):
    with open(path) as fh:
        spec = json.load(fh)
    if not isinstance(spec, list) or not spec:
        raise ValueError("bounds file must be a non-empty JSON list")
    try:
        names = [str(b["name"]) for b in spec]
        bounds = [[float(b["lower"]), float(b["upper"])] for b in spec]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"bad bounds entry: {exc}") from None
    return names, bounds


def cmd_serve(args):
    if args.state and os.path.exists(args.state):
        state = read_state(args.state)
    elif args.bounds:
        names, bounds = _read_bounds(args.bounds)
        state = OptState.create(bounds, names, _settings(args), args.seed)
        if args.state:
            write_state(state, args.state)
    else:
        raise ValueError("serve needs --bounds (or an existing --state)")
    serve(state, sys.stdin, sys.stdout, args.state)
    return 0


def cmd_kernel_samples(args):
    p = ExpDecayParams(args.alpha, args.beta, args.noise_var)
    t = np.arange(0, args.t_max + 1, dtype=float)
    rng = np.random.default_rng(args.seed)
    if args.mode == "prior":
        bench.write_samples(t, bench.sample_decay_prior(t, p, args.n_samples, rng), args.out)
    elif args.mode == "basis":
        _, values = bench.decay_basis(t, p, args.n_samples, rng)
        bench.write_samples(t, values, args.out, prefix="basis")
    else:
        ou = OuParams(args.ou_variance, args.ou_length)
        bench.write_samples(t, bench.sample_training_curves(t, p, ou, args.n_samples, rng),
                            args.out, prefix="curve")
    return 0


def cmd_inspect(args, out=None):
    out = out or sys.stdout
    state = read_state(args.state)
    data = state.data
    print(f"dimensions: {state.dim} ({', '.join(state.names)})", file=out)
    print(f"round: {state.round}  seed: {state.rng_seed}  configs: {len(data)}  "
          f"epochs: {data.n_obs}", file=out)
    print(f"curves: {len(data.observed())}", file=out)
    if data.n_obs == 0:
        return 0
    if state.chain is not None:
        hypers = HyperVector(state.dim).to_hypers(np.asarray(state.chain))
    else:
        hypers = initial_hypers(state.dim, observed_bounds(data), float(np.mean(data.all_losses())))
    model = fit(data, hypers)
    mean, var = asymptote_marginals(model, data.X)
    print(f"{'id':>6} {'epochs':>6} {'last loss':>12} {'best loss':>12} "
          f"{'asymptote':>12} {'sd':>10}  x", file=out)
    for n in range(len(data)):
        y = data.curves[n]
        last = f"{y[-1]:12.6g}" if len(y) else f"{'-':>12}"
        best = f"{np.min(y):12.6g}" if len(y) else f"{'-':>12}"
        x = ", ".join(f"{v:.6g}" for v in state.from_unit(data.X[n]))
        print(f"{data.ids[n]:>6} {len(y):>6} {last} {best} {mean[n]:12.6g} "
              f"{np.sqrt(var[n]):10.4g}  [{x}]", file=out)
    return 0


COMMANDS = {"bench": cmd_bench, "serve": cmd_serve, "kernel-samples": cmd_kernel_samples,
            "inspect": cmd_inspect}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, StateError, RuntimeError) as exc:
        print(f"freezethaw {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
