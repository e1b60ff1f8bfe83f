"""Likelihood-free maximum likelihood estimation via local Fisher score matching."""

from .estimator import (
    GradEstimate,
    LinearScoreModel,
    ProposalSpec,
    SimBatch,
    SingularGramError,
    empirical_objective,
    estimate_gradient,
    evaluate_score,
    evaluate_scores,
    fit_linear_fsm,
    proposal_log_grad,
    sample_batch,
)
from .kdesp import KdeSpConfig, kde_loglik, spsa_gradient, spsa_schedules
from .models import (
    GaussianMeanModel,
    ModelError,
    ShiftedExponentialModel,
    SimulatorModel,
    model_from_config,
    simulate,
)
from .optimize import (
    FsmSettings,
    KdeSpSettings,
    OptConfig,
    OptTrace,
    polyak_average,
    run_mle,
    tune_grid,
)
from .uq import (
    ConfidenceInterval,
    FisherInfoEstimate,
    confidence_interval,
    coverage_experiment,
    estimate_fisher_info,
    normal_quantile,
)

__version__ = "0.1.0"

__all__ = [
    "ConfidenceInterval",
    "FisherInfoEstimate",
    "FsmSettings",
    "GaussianMeanModel",
    "GradEstimate",
    "KdeSpConfig",
    "KdeSpSettings",
    "LinearScoreModel",
    "ModelError",
    "OptConfig",
    "OptTrace",
    "ProposalSpec",
    "ShiftedExponentialModel",
    "SimBatch",
    "SimulatorModel",
    "SingularGramError",
    "confidence_interval",
    "coverage_experiment",
    "empirical_objective",
    "estimate_fisher_info",
    "estimate_gradient",
    "evaluate_score",
    "evaluate_scores",
    "fit_linear_fsm",
    "kde_loglik",
    "model_from_config",
    "normal_quantile",
    "polyak_average",
    "proposal_log_grad",
    "run_mle",
    "sample_batch",
    "simulate",
    "spsa_gradient",
    "spsa_schedules",
    "tune_grid",
]
