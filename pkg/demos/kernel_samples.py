"""
=============================
The exponential-decay kernel
=============================
Training curves of iterative learners tend to fall quickly at first and then
flatten out towards some final value. A covariance that encodes this can be
built by mixing decaying exponentials ``exp(-lambda t)`` over a gamma
distribution of rates; the mixture integrates to the closed form

    k(t, t') = beta**alpha / (t + t' + beta)**alpha

This script checks the closed form against numerical integration, draws
sample paths from the prior and writes them as CSV files that any plotting
tool can read.

Run it from the repository root::

    python demos/kernel_samples.py [output-directory]
"""
print(__doc__)

import os
import sys

import numpy as np

from freezethaw.bench import (decay_basis, sample_decay_prior, sample_training_curves,
                              write_samples)
from freezethaw.kernels import ExpDecayParams, OuParams, exp_decay_cov, exp_decay_cov_quadrature

out_dir = sys.argv[1] if len(sys.argv) > 1 else "kernel_samples_out"
os.makedirs(out_dir, exist_ok=True)
rng = np.random.default_rng(0)

#############################################################################
# Closed form against quadrature
# ------------------------------
# The quadrature integrates the gamma mixture of exponentials with a
# 64-node generalized Gauss-Laguerre rule. The two should agree to rounding.

t = np.arange(11.0)
for alpha, beta in [(0.5, 0.5), (1.0, 0.5), (2.0, 2.0)]:
    p = ExpDecayParams(alpha, beta)
    err = np.abs(exp_decay_cov(t[:, None], t[None, :], p)
                 - exp_decay_cov_quadrature(t[:, None], t[None, :], p)).max()
    print(f"alpha={alpha:<4} beta={beta:<4} max |closed - quadrature| = {err:.1e}")

#############################################################################
# Basis functions and prior draws
# -------------------------------
# Each basis function is a single decaying exponential with a rate drawn
# from the gamma mixing distribution. Draws from the GP prior are smooth,
# monotone-looking curves whose variance shrinks as training goes on.

p = ExpDecayParams(alpha=1.0, beta=0.5)
times = np.arange(0.0, 101.0)
_, basis = decay_basis(times, p, 10, rng)
write_samples(times, basis, os.path.join(out_dir, "basis.csv"), prefix="basis")

draws = sample_decay_prior(times, p, 10_000, rng)
print(f"\nprior variance at t=1: empirical {draws[1].var():.4f}, "
      f"closed form {exp_decay_cov(1.0, 1.0, p):.4f}")
write_samples(times, draws[:, :10], os.path.join(out_dir, "prior.csv"))

#############################################################################
# Realistic training curves
# -------------------------
# Conditioning the prior to start near a positive value and adding a little
# Ornstein-Uhlenbeck noise gives curves that look like validation losses.

curves = sample_training_curves(times, p, OuParams(), 10, rng)
write_samples(times, curves, os.path.join(out_dir, "curves.csv"), prefix="curve")
print(f"start values: {np.round(curves[0], 2)}")
print(f"values at t=100: {np.round(curves[-1], 2)}")
print(f"\nwrote basis.csv, prior.csv and curves.csv to {out_dir}/")
