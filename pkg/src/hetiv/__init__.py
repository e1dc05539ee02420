"""Logit-based, augmented logit-based and two-stage least squares IV estimation
for a binary treatment and a binary instrument, with influence-function
inference, Hausman tests and an exact population oracle for discrete DGPs."""

from .errors import *  # noqa: F401,F403
from .numerics import (
    FitOptions,
    LinkFunction,
    MleFit,
    fit_binary_mle,
    fit_ols,
    fit_weighted_binary,
    link_eval,
    logistic,
    solve_spd,
)
from .estimators import (
    AugmentedEstimate,
    Dataset,
    EstimatorKind,
    IvEstimate,
    RegularityDiagnostics,
    WeakInstrumentWarning,
    augmented_logit_iv,
    estimate,
    logit_iv,
    tsls,
)
from .inference import (
    HausmanResult,
    HausmanVariant,
    InferenceReport,
    InfluencePieces,
    hausman_full,
    hausman_split,
    influence_augmented,
    influence_logit_iv,
    influence_tsls,
    variance_augmented,
    variance_logit_iv,
    variance_tsls,
)
from .dgp import (
    AssumptionTags,
    DgpSpec,
    LimitDecomposition,
    MonteCarloResult,
    PopulationLimits,
    WeightKind,
    WeightProfile,
    check_assumptions,
    limit_decomposition,
    mc_oracle,
    mc_study,
    population_params,
    sample,
    true_late,
    weight_profile,
)

__version__ = "0.1.0"
