"""levelcut: batched derivative-free optimization by repeatedly classifying
sublevel sets and downweighting the predicted above-threshold region."""

from .core import (
    ContinuousBox,
    DiscreteSpace,
    LabeledSet,
    Observation,
    RunTrace,
    SeedPolicy,
    best_so_far,
    median_threshold,
    relabel_history,
)
from .classify import (
    ABSTAIN,
    CUT,
    KEEP,
    BootstrapLinearConfig,
    BootstrapLinearLabeler,
    CssLinearLabeler,
    OracleSublevel,
    TreeEnsemble,
    TreeEnsembleConfig,
    VersionSpaceDecision,
    consensus_decide,
    consensus_linear,
    css_linear_decide,
    fit_logistic_mle,
    fit_tree_ensemble,
    multiplier_bootstrap,
)
from .optimize import (
    OptimizerConfig,
    PairwiseConfig,
    pairwise_labels,
    run_classify_opt,
    run_random,
    run_random2x,
)
from .sample import (
    DiscreteWeights,
    ParticleState,
    coverage,
    draw_continuous,
    draw_discrete,
    mw_update,
)
from .theory import (
    BoundReport,
    McReport,
    abstention_rate,
    tuned_eta_and_bound,
    exact_classifier_log_floor,
    mc_chisq_ball,
    mc_gaussian_min,
    mw_lower_bound,
    verify_weight_bound,
)

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN",
    "CUT",
    "KEEP",
    "BoundReport",
    "BootstrapLinearConfig",
    "BootstrapLinearLabeler",
    "ContinuousBox",
    "CssLinearLabeler",
    "DiscreteSpace",
    "DiscreteWeights",
    "LabeledSet",
    "McReport",
    "Observation",
    "OptimizerConfig",
    "OracleSublevel",
    "PairwiseConfig",
    "ParticleState",
    "RunTrace",
    "SeedPolicy",
    "TreeEnsemble",
    "TreeEnsembleConfig",
    "VersionSpaceDecision",
    "abstention_rate",
    "best_so_far",
    "consensus_decide",
    "consensus_linear",
    "tuned_eta_and_bound",
    "coverage",
    "css_linear_decide",
    "draw_continuous",
    "draw_discrete",
    "exact_classifier_log_floor",
    "fit_logistic_mle",
    "fit_tree_ensemble",
    "mc_chisq_ball",
    "mc_gaussian_min",
    "median_threshold",
    "multiplier_bootstrap",
    "mw_update",
    "pairwise_labels",
    "relabel_history",
    "run_classify_opt",
    "run_random",
    "run_random2x",
    "mw_lower_bound",
    "verify_weight_bound",
]
