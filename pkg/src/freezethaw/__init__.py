"""Freeze-thaw Bayesian optimization.

Training curves are modelled as exponential decays toward a latent asymptote
that varies smoothly over hyperparameter space. Each round the optimizer
either starts a new configuration or resumes a paused one, whichever is
expected to tell it most about where the lowest asymptote lies.
"""

from .kernels import (ExpDecayParams, OuParams, WarpedMaternParams, beta_warp,
                      curve_gram, exp_decay_cov, exp_decay_cov_quadrature, hyper_gram,
                      matern52_cov)
from .ftgp import (CurveSet, FtgpModel, GaussianPrediction, Hypers, condition,
                   dense_joint_oracle, fit, log_marginal_likelihood,
                   predict_asymptote_new, predict_asymptote_observed, predict_curve_new,
                   predict_curve_next)
from .mcmc import HyperPriorSpec, log_prior, sample_hypers, slice_sample_step
from .acquisition import (build_basket, entropy, estimate_pmin, expected_improvement,
                          score_actions, select_action)
from .controller import (Action, OptState, Settings, load_state, observe, save_state,
                         suggest)

__version__ = "0.1.0"
