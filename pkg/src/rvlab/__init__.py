"""Regular variation of products, homogeneous maps and stochastic recurrences.

Samplers for regularly varying laws, homogeneous maps, tail estimators,
closed-form and Monte Carlo limit constants, a stochastic recurrence
simulator and a config-driven experiment harness.
"""

from .errors import (
    ConfigurationError,
    DegenerateLawError,
    DomainError,
    ExperimentError,
    InsufficientDataError,
    RegimeError,
    RvlabError,
    UndefinedRatioError,
)
from .estimators import (
    TailEstimate,
    balance_constants,
    empirical_spectral,
    hill_estimate,
    quantile_threshold,
    tail_ratio,
    window_diagnostic,
)
from .harness import ExperimentConfig, RunRecord, emit_report, load_records, parallel_mc, run_experiment
from .maps import (
    HomogeneousMap,
    apply_map,
    check_homogeneity,
    custom_map,
    kronecker_map,
    map_bound,
    matrix_product_map,
    quadratic_form_map,
    validate_map,
)
from .oracles import (
    LimitMeasureQuery,
    OracleResult,
    breiman_constant,
    equivalent_tail_constant,
    eta_measure,
    product_norm_constant,
    product_spectral_law,
    symmetry_check,
    univariate_product_constant,
)
from .rng import stream, substream
from .rv_core import (
    DiscreteLaw,
    LognormalLaw,
    PointMass,
    RegVarSpec,
    SlowlyVaryingSpec,
    SphereDist,
    TailIndex,
    norm,
    operator_norm,
    pareto_quantile,
    radius_moment,
    radius_quantile,
    sample_radius,
    sample_regvar_vector,
    sample_tail_balanced_scalar,
    survival,
)
from .sre import (
    SreModel,
    StationarySample,
    check_conditions,
    iterate_sre,
    majorant_moment,
    nu_measure,
    one_step_check,
    series_truncation,
)

__version__ = "0.1.0"
