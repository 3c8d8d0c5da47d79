"""Stability of KL divergence under Gaussian perturbations: bounds, oracles and a toy-flow OOD check."""

__version__ = "0.1.0"

from .exceptions import (
    ContractViolation,
    DomainError,
    FlowNumericError,
    InternalConsistencyError,
    KLStabError,
    NearSingularError,
    OutOfRegimeError,
    UnsupportedSizeError,
)
from .gaussian import MultivariateGaussian, SpdFactorization, gaussian_kl, matrix_norms, whitened_eigenvalues
from .scalar_lemmas import (
    PairAveragingTrace,
    extremal_log_sum_oracle,
    f_gap,
    log_sum_bound,
    pair_average_iterate,
    quadratic_minorant_gap,
)
from .perturbation import DeviationReport, deviation_report, eigen_window_check
from .stability import (
    BoundBreakdown,
    LogRatioCoefficients,
    MomentSummary,
    expected_log_ratio,
    log_ratio_coefficients,
    stability_bound,
    standard_prior_bound,
    tightness_instance,
)
from .empirical import (
    GaussianMixture,
    SampleSet,
    mc_expected_log_ratio,
    mc_kl_mixture_vs_gaussian,
    mixture_moments,
    sample,
)
from .flow import HyperbolicLeaky, LinearLayer, ToyFlow, Translation, flow_forward, flow_inverse, flow_log_likelihood
from .ood import LatentGaussianOOD, OodReport, fit_gaussian, ood_separation_report
