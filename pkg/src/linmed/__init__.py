"""LinMED and baseline policies for stochastic linear bandits.

Closed-form sampling probabilities for off-policy logging, an approximate
G-optimal design routine, benchmark environments and a seeded experiment
harness.
"""
from .design import Design, DesignReport, approx_design, bh_spanner, design_augmented, design_cap
from .envs import Instance, delayed, load_arms_csv, step
from .errors import (
    ConfigError,
    DesignError,
    EstimatorUndefined,
    InvalidArgument,
    LinMedError,
    ParseError,
    SchemaError,
    Unsupported,
)
from .harness import ExperimentConfig, RegretCurve, load_config, run_experiment, run_ope
from .linalg import ConfidenceParams, GramState, beta, gram_init, gram_update, leverage, mahalanobis_gap
from .ope import LogRecord, ipw_estimate, log_run, oracle_value, read_log_csv, uniform_target, write_log_csv
from .policies import (
    EXP2,
    LINMED_PRESETS,
    OFUL,
    ActionDistribution,
    LinMED,
    LinMedConfig,
    LinMEDNOPT,
    LinTS,
    PolicyDecision,
    linmed_distribution,
    linmed_step,
    linmednopt_distribution,
)
from .simulate import run_trial

__version__ = "0.1.0"
