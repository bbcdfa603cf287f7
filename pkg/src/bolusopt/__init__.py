"""GP-based meal bolus decision support with risk-sensitive Bayesian optimization.

Layers: ``gp`` (SE-kernel Gaussian process regression), ``pg`` (postprandial
glucose model: per-step difference GPs and trajectory rollout), ``cost``
(asymmetric risk-sensitive cost with Monte-Carlo estimation), ``bo``
(expected-improvement Bayesian optimization over the bolus interval),
``advisor`` (end-to-end recommendation with IOB safety and the standard
calculator baseline), ``insilico`` (virtual patient cohort, protocols,
metrics), plus configuration, cohort evaluation, advisory-mode replay, a
CLI and an HTTP service.
"""

from .advisor import (
    AdvisorConfig,
    BolusRecommendation,
    CalculatorSettings,
    DoseRecord,
    IobModel,
    iob,
    recommend_bolus,
    standard_calculator,
)
from .bo import Observation, expected_improvement, init_design, optimize_bolus, propose_next
from .config import AppConfig, ConfigError, default_config, load_config, save_config
from .cost import CostConfig, CostEstimate, estimate_ars_cost, q_minus_weight, sample_exponent, total_cost
from .gp import (
    Dataset,
    FitConfig,
    GpError,
    KernelParams,
    LinearMean,
    TrainedGp,
    fit_hyperparams,
    nlml,
    posterior_predict,
    se_kernel,
)
from .pg import (
    GlucoseTrace,
    MealEvent,
    PgPredictor,
    PgTrainingSample,
    PredictedTrajectory,
    load_predictor,
    predict_trajectory,
    save_predictor,
    serialize_samples,
    train_pg_model,
)

__version__ = "0.1.0"
