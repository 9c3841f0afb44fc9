"""Joint specification tests for conditional mean and variance models."""

from .bootstrap import BootstrapKernel, bootstrap_pvalues, build_M
from .errors import ConfigError, DataError, DomainError, JointSpecError
from .estimation import FitResult, InfluenceSeries, influence, qmle_fit
from .khmaladze import (
    bm_cvm_pvalue,
    build_transform,
    estimate_g,
    transform,
    transform_test,
    transformed_cvm,
)
from .models import (
    DgpSpec,
    InfoState,
    ModelSpec,
    ParamVector,
    discretize_sde,
    eval_conditional,
    get_model,
    simulate_dgp,
)
from .quadform import QuadFormSpec, build_node_covariance, imhof_tail, numeric_pvalues
from .residuals import (
    CovEstimates,
    MarkSeries,
    combine,
    compute_marks,
    cumulative_process,
    empirical_covariance,
    raw_cvm,
)

__version__ = "0.1.0"
