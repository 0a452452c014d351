"""FDR control for heterogeneous discrete null distributions."""

from .cdf_model import (
    ContinuousCDF,
    StepCDF,
    SuperUniformityReport,
    TestFamily,
    avg_cdf,
    avg_cdf_sd,
    avg_cdf_su,
    check_super_uniformity,
    identity_cdf,
    piecewise_linear_cdf,
    topk_ratio_sum,
)
from .exact_tests import (
    BinomialTestSpec,
    FisherTestSpec,
    binomial_tail,
    binomial_test,
    family_from_observations,
    fisher_test,
)
from .procedures import PROCEDURES, CriticalValues, critical_values, procedure_direction
from .stepwise import RejectionResult, step, step_down, step_up
from .verify import GroundTruth, bound_sd, bound_su, exact_fdr, monte_carlo_fdr

__version__ = "0.1.0"
