"""Asynchronous Bayesian-optimization benchmark toolkit."""

from .acquisitions import (
    AcqStreams,
    AcquisitionRule,
    BusySet,
    RULE_NAMES,
    expected_log_ei,
    kriging_believer,
    log_ei,
    penalized_ucb,
    propose,
    thompson_propose,
    ucb,
)
from .gp import (
    Dataset,
    GpModel,
    KernelHyperparams,
    LengthscalePrior,
    condition_on_fantasies,
    fit_hyperparameters,
    fit_posterior,
    kernel_eval,
    log_marginal_likelihood,
    predict,
    predict_joint,
)
from .metrics import (
    aggregate,
    busy_distance,
    lengthscale_stats,
    log_regret,
    mann_whitney_u,
    win_rate,
)
from .objectives import DurationModel, Objective, evaluate, get_objective, sample_duration
from .optimize import MaximizeResult, OptimizerConfig, maximize
from .sampling import PathSample, RngStream, draw_posterior_path, eval_path, halton_points, mvn_sample
from .simulator import RunConfig, RunTrace, run_async, run_seq
from .experiment import ExperimentSpec, analyze, execute, parse_config

__version__ = "0.1.0"
