"""Robust agnostic learning of halfspaces via polynomial regression.

Pipeline: an L1 polynomial regression with noise-sensitivity constraints,
randomized rounding to four thresholds, a random-direction partition that
mixes them, and a local corrector that flips isolated labels.  A verifier
certifies individual points against radius-r perturbations.
"""

from .attack import AttackBudget, attack, attack_many
from .config import ConfigError, ExperimentConfig
from .corrector import lca_label, lca_labels, robust_indicator, robust_indicators
from .dist import ArraySource, DataSpec, Halfspace, PlantedSource, gaussian_cdf, gaussian_quantile
from .errors import HypothesisValidationError, TrainingFailure
from .estimator import MonomialFeatures, RobustHalfspaceClassifier
from .learn import MetricsReport, classification_error, evaluate, robust_learn, run_experiment
from .lpsolve import LPProblem, LPSolution, LPStalled, solve
from .partition import HypothesisData, compute_classifier, hypothesis_eval, predict
from .poly import PTF, MonomialBasis, Polynomial, make_basis
from .regression import RegressionConfig, learn_real_valued
from .rounding import Mixture, ThresholdStats, compute_rounding_thresholds, find_mixture
from .sensitivity import PerturbationSet, ns_hat, phi_hat, psi_hat
from .verify import Verdict, compile, verify_point, verify_points

__version__ = "0.1.0"

__all__ = [
    "ArraySource", "AttackBudget", "ConfigError", "DataSpec", "ExperimentConfig",
    "Halfspace", "HypothesisData", "HypothesisValidationError", "LPProblem",
    "LPSolution", "LPStalled", "MetricsReport", "Mixture", "MonomialBasis",
    "MonomialFeatures", "PTF", "PerturbationSet", "PlantedSource", "Polynomial",
    "RegressionConfig", "RobustHalfspaceClassifier", "ThresholdStats",
    "TrainingFailure", "Verdict", "attack", "attack_many", "classification_error",
    "compile", "compute_classifier", "compute_rounding_thresholds", "evaluate",
    "find_mixture", "gaussian_cdf", "gaussian_quantile", "hypothesis_eval",
    "learn_real_valued", "lca_label", "lca_labels", "make_basis", "ns_hat",
    "phi_hat", "predict", "psi_hat", "robust_indicator", "robust_indicators",
    "robust_learn", "run_experiment", "solve", "verify_point", "verify_points",
]
