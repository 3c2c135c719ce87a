"""Bridge-matching estimators of mutual information, KL divergence and entropy."""

from .bridge import BridgeConfig, sample_bridge_point, simulate_sde
from .driftnet import DriftNet, NetConfig, load_checkpoint, save_checkpoint
from .errors import BridgeMIError, ConfigError, DataError, NumericalError
from .estimators import (
    EstimateReport,
    EstimatorConfig,
    ReferenceSpec,
    estimate_entropy_gaussian,
    estimate_entropy_uniform,
    estimate_kl,
    estimate_mi,
    run_infobridge,
    run_kl,
    train_infobridge,
    train_kl_bridges,
)
from .oracle import GaussianDrift, analytic_gaussian_mi, ksg_mi, numeric_mi_1d
from .tasks import JointTask, make_correlated_gaussian, make_uniform_noise, sample_pairs

__all__ = [
    "BridgeConfig",
    "BridgeMIError",
    "ConfigError",
    "DataError",
    "DriftNet",
    "EstimateReport",
    "EstimatorConfig",
    "GaussianDrift",
    "JointTask",
    "NetConfig",
    "NumericalError",
    "ReferenceSpec",
    "analytic_gaussian_mi",
    "estimate_entropy_gaussian",
    "estimate_entropy_uniform",
    "estimate_kl",
    "estimate_mi",
    "ksg_mi",
    "load_checkpoint",
    "make_correlated_gaussian",
    "make_uniform_noise",
    "numeric_mi_1d",
    "run_infobridge",
    "run_kl",
    "sample_bridge_point",
    "sample_pairs",
    "save_checkpoint",
    "simulate_sde",
    "train_infobridge",
    "train_kl_bridges",
]
