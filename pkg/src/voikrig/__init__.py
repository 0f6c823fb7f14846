"""Value-of-information analysis over expensive system models via
error-controlled, adaptively trained Kriging surrogates."""

from .config import RunConfig, default_config, parse_config
from .decision import (
    DecisionProblem,
    MeasurementPlan,
    VoiPool,
    VoiResult,
    classify_event,
    estimate_voi,
    likelihood_weights,
    posterior_event_probs,
    prior_decision,
    vopi,
)
from .distributions import DistributionSpec, SampleMatrix, lhs_sample, make_distribution, quantile
from .error_control import (
    LimitState,
    StoppingReport,
    failure_prob_cov,
    max_error_rate,
    threshold_margin,
    wrong_sign_probs,
)
from .experiment import (
    RunRecord,
    calibrate_measurement_noise,
    mcs_oracle,
    replay,
    run_experiment,
    sweep_schemes,
)
from .kriging import KrigingModel, KrigingOptions, Prediction, TrainingSet, correlation, fit, predict
from .poisson_binomial import PoissonBinomial, pb_inverse_cdf
from .trainer import (
    FrameworkResult,
    LimitStateGroup,
    SurrogateProblem,
    TrainerConfig,
    group_limit_states,
    run_framework,
    select_next_points,
    train_group,
)
from .truss import TrussGeometry, midspan_deflection, midspan_deflection_many, solve_truss

__version__ = "0.1.0"
