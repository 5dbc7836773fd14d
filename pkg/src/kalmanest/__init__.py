"""Linear minimum-variance estimation and Kalman filtering.

Batch estimators (Gauss-Markov, minimum variance in gain and information
form), the sequential measurement update, the projection-form and the
Bayesian predict/correct Kalman filters, a seeded linear-Gaussian
simulator, and a CLI harness that checks the algebra linking them.
"""

from .batch_estimators import (
    BatchEstimate,
    BatchProblem,
    RankDeficient,
    SecondMoments,
    error_covariance_of_linear_estimator,
    gauss_markov,
    linear_function_estimate,
    min_variance_gain,
    min_variance_prior_gain,
    min_variance_prior_info,
)
from .core_linalg import (
    AsymmetryExceedsTol,
    DimensionMismatch,
    LinAlgError,
    NotPositiveDefinite,
    NotSquare,
    SpdMatrix,
    logdet,
    solve_spd,
    spd_check,
    symmetrize,
    woodbury_posterior_cov,
)
from .kalman_bayes import (
    CorrectionResult,
    GaussianBelief,
    bayes_filter_run,
    correct,
    gaussian_product_decompose,
    information_correct,
    log_gaussian_density,
    predict,
)
from .kalman_projection import ProjectionFilterState, projection_filter_run, projection_step
from .sequential_update import MeasurementBlock, PriorEstimate, innovation, innovation_covariance, update
from .simulator import (
    JointMoments,
    StateSpaceModel,
    Trajectory,
    batch_oracle_estimate,
    propagate_moments,
    sample_ensemble,
    sample_trajectory,
)
from .trace import EmptyMeasurementSequence, FilterTrace

__version__ = "0.1.0"
