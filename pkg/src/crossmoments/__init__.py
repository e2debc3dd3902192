"""Moments of level-set counts and measures of smooth stationary Gaussian
processes and fields: closed-form conditioning, Kac-Rice quadrature, the
small-lag convergence classifier, and a Monte Carlo verification engine.
"""

from .covmodels import (
    CovarianceModel1D,
    GaussianExp,
    GaussianRadial,
    IsotropicFieldModel,
    LacunaryLog,
    MaternLike,
    MaternRadial,
    RadialProfile,
    SineCosine,
    SpectralTable,
    eval_cov,
    field_from_json,
    geman_integrands,
    model_from_json,
    profile_from_json,
    sigma2,
    spectral_moment,
)
from .errors import (
    ConfigError,
    CrossmomentsError,
    DegenerateLag,
    DegenerateObservation,
    EmbeddingNotPSD,
    InconclusiveTail,
    InnerMCBudgetExceeded,
    NewtonStall,
    NonSmooth,
    QuadratureNonConvergent,
)
from .gausscond import (
    BivariateAbsMomentQuery,
    GaussianConditional,
    abs_moment,
    condition,
    conditional_abs_product,
    hermite_e,
    lcov_closed_form,
    lcov_conditional_means,
    mehler_covariance,
    pair_conditional_1d,
    product_variance_lower,
)
from .kacrice import (
    GemanConfig,
    GemanReport,
    InnerMCConfig,
    KacRiceIntegrand1D,
    MomentReport,
    PlaneWaveField,
    QuadConfig,
    critical_condition,
    critical_sbar2,
    geman_classify,
    length_second_moment_2d_to_1d,
    rice_mean_1d,
    rice_mean_length_2d,
    rice_mean_roots_2d,
    second_factorial_moment_1d,
    second_moment_2d_zero,
    sigma2_max,
)
from .simulate import (
    EnsembleConfig,
    GridField,
    SimulationEnsemble,
    contour_length,
    count_crossings,
    count_roots_2d,
    run_ensemble,
    sample_field_2d,
    sample_process_1d,
)

__version__ = "0.1.0"
