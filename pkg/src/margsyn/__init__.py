"""Differentially private synthetic tabular data from noisy marginals."""

from margsyn._kernels import BACKEND
from margsyn.consistency import make_consistent, project_valid
from margsyn.data import (
    AttributeDomain,
    DataError,
    Dataset,
    load_csv,
    load_domain,
    write_csv,
)
from margsyn.evaluation import (
    RangeQuery,
    range_query_error,
    sample_queries,
    two_way_error,
)
from margsyn.marginal import MarginalSpec, MarginalTable, compute_marginal, indif
from margsyn.pipeline import PipelineConfig, PipelineError, PipelineRun, run
from margsyn.privacy import (
    PrivacyBudget,
    allocate_budget,
    dp_to_zcdp,
    gaussian_sigma,
    sigma_for_m_tasks,
    zcdp_to_dp,
)
from margsyn.selection import (
    PairScore,
    SelectionResult,
    combine_marginals,
    publish_indif,
    select_marginals,
)
from margsyn.synthesis import SynthConfig, gum_synthesize, mcf_synthesize

__version__ = "0.1.0"

__all__ = [
    "AttributeDomain",
    "BACKEND",
    "DataError",
    "Dataset",
    "MarginalSpec",
    "MarginalTable",
    "PairScore",
    "PipelineConfig",
    "PipelineError",
    "PipelineRun",
    "PrivacyBudget",
    "RangeQuery",
    "SelectionResult",
    "SynthConfig",
    "allocate_budget",
    "combine_marginals",
    "compute_marginal",
    "dp_to_zcdp",
    "gaussian_sigma",
    "gum_synthesize",
    "indif",
    "load_csv",
    "load_domain",
    "make_consistent",
    "mcf_synthesize",
    "project_valid",
    "publish_indif",
    "range_query_error",
    "run",
    "sample_queries",
    "select_marginals",
    "sigma_for_m_tasks",
    "two_way_error",
    "write_csv",
    "zcdp_to_dp",
]
