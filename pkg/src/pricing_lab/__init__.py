"""Contextual dynamic pricing laboratory.

Demand follows a probit-style binary purchase model whose price sensitivity
depends on the context; the lab bundles the perturbed greedy pricing policy
driven by an online Newton step, epoch-refit maximum-likelihood baselines,
seeded environments (stochastic and adversarial), and a regret harness with
log-log slope fits.
"""

from .config import ConfigError, ExperimentConfig, build_env, load_config, parse_config
from .environments import EnvSpec, Expansion, expand_context, gen_ground_truth, make_env, sample_demand
from .harness import (
    RegretCurve,
    TrialResult,
    checkpoints,
    loglog_slope,
    run_experiment,
    run_trial,
    wald_band,
)
from .likelihood import Observation, ParamPair, nll, nll_grad, nll_hessian
from .link import LinkModel, PricingConstants, derive_constants, greedy_price, varphi, varphi_inv
from .ons import OnsState, a_norm_project, nll_regret_bound, ons_init, ons_round
from .policies import make_pwp, make_rmlp2, mle_fit, pwp_price
from .verify import run_verify

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "EnvSpec",
    "ExperimentConfig",
    "Expansion",
    "LinkModel",
    "Observation",
    "OnsState",
    "ParamPair",
    "PricingConstants",
    "RegretCurve",
    "TrialResult",
    "a_norm_project",
    "build_env",
    "checkpoints",
    "derive_constants",
    "expand_context",
    "gen_ground_truth",
    "greedy_price",
    "load_config",
    "loglog_slope",
    "make_env",
    "make_pwp",
    "make_rmlp2",
    "mle_fit",
    "nll",
    "nll_grad",
    "nll_hessian",
    "nll_regret_bound",
    "ons_init",
    "ons_round",
    "parse_config",
    "pwp_price",
    "run_experiment",
    "run_trial",
    "run_verify",
    "sample_demand",
    "varphi",
    "varphi_inv",
    "wald_band",
    "__version__",
]
