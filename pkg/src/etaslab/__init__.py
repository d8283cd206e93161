"""Temporal ETAS modelling: fitting, simulation, and forecast scoring."""

from .catalog import (
    Catalog,
    CatalogSplit,
    Event,
    inter_event_times,
    merge_events,
    parse_catalog,
    read_catalog,
    serialize_catalog,
    split_at_mainshock,
    write_catalog,
)
from .errors import (
    CatalogOverflowWarning,
    CatalogParseError,
    DegenerateLikelihoodError,
    DegenerateMagnitudesError,
    EtasLabError,
    HessianNotPositiveDefiniteError,
    InsufficientDataError,
    InvalidWindowError,
    LinearizationError,
    SupercriticalError,
)
from .estimator import EtasModel
from .inference import (
    FitConfig,
    PosteriorApproximation,
    fit,
    posterior_summary,
    sample_posterior,
)
from .likelihood import (
    BinningConfig,
    BinPartition,
    LinearizedLikelihood,
    LinearizedTerm,
    approximate_log_likelihood,
    integrated_background,
    integrated_triggering,
    linearize_log_terms,
    log_likelihood_binned,
    log_likelihood_exact,
    make_bins,
)
from .model import (
    PARAMETER_NAMES,
    EtasParameters,
    MagnitudeLaw,
    conditional_intensity,
    estimate_beta,
    sample_magnitude,
    triggering_rate,
)
from .priors import (
    LinkedPrior,
    ParameterTransform,
    PriorSpec,
    default_initial_values,
    default_priors,
    link_to_model_scale,
    log_prior_internal,
    make_fixed_prior,
    quantile,
    std_normal_cdf,
)
from .scoring import (
    EcdfCurve,
    ForecastEnsemble,
    ScoreReport,
    crps,
    exp1_cdf,
    ks_distance,
    n_test,
    normalized_iet_ecdf,
    score_forecast,
    weekly_counts,
)
from .simulator import (
    SimulationConfig,
    branching_ratio,
    sample_background,
    sample_offspring,
    simulate_catalog,
    simulate_ensemble,
)

__version__ = "0.1.0"
