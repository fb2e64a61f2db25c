"""High-dimensional Spearman- and Kendall-type rank tests for sphericity."""

from .distributions import Scenario, ScenarioSpec, sample, scale_matrix, shape_from_v
from .errors import (
    DegenerateInputError,
    InsufficientSampleError,
    InvalidInputError,
    RankSphericityError,
)
from .montecarlo import (
    ExperimentConfig,
    McReport,
    ScenarioTemplate,
    emit_report,
    mean_sd_ratio,
    run_experiment,
    variance_ratio,
)
from .rank_tests import (
    Method,
    ShapeSpec,
    TestResult,
    analytic_power,
    john_statistic,
    kendall_test,
    normal_cdf,
    rank_tests,
    sigma0,
    sigma1,
    spearman_test,
    tr_omega_sq_hat,
    tr_xi_sq_hat,
)
from .sign_core import (
    PairwiseSignSet,
    SampleMatrix,
    SignGram,
    kendall_cov,
    pairwise_signs,
    rank_cov,
    sign_gram,
    spatial_sign,
    tau_f_ratio,
)

__version__ = "0.1.0"
