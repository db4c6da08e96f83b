"""Low-rank intensity estimation for longitudinal networks.

Timestamped directed edges are binned into Poisson count tensors, a Tucker-
factored log-intensity tensor is fitted by projected gradient ascent on a
penalized likelihood, and time intervals are adaptively merged from the fitted
temporal embedding to trade estimation bias against variance.
"""

from .baselines import hooi, hosvd
from .estimator import (EstimationError, FitResult, PgdConfig, grad_factors, grad_m,
                        initialize, log_likelihood, pgd_fit, project, reg_grads,
                        regularizer)
from .events import (EdgeSet, Partition, bin_edges, equal_partition, load_edges,
                     save_edges)
from .merging import (MergeConfig, MergeError, OrderedPartitionResult,
                      best_ordered_partition, default_nu, endpoints_from_segments,
                      normalize_w, select_k)
from .pipeline import (PipelineConfig, PipelineError, PipelineReport, auto_L,
                       compare_methods, crossval, run_pipeline, sweep_L)
from .synthetic import (GroundTruth, SyntheticConfig, estimation_error, expand_truth,
                        generate_truth, masked_prediction_error, sample_edges)
from .tensor import (TuckerFactors, frobenius_norm, mode_product, mode_refold,
                     mode_unfold, sigma_r, tucker_assemble, two_to_inf_norm)

__version__ = "0.1.0"

__all__ = [
    "EdgeSet", "Partition", "TuckerFactors", "PgdConfig", "MergeConfig",
    "SyntheticConfig", "PipelineConfig", "GroundTruth", "FitResult",
    "OrderedPartitionResult", "PipelineReport",
    "EstimationError", "MergeError", "PipelineError",
    "mode_unfold", "mode_refold", "mode_product", "tucker_assemble",
    "frobenius_norm", "sigma_r", "two_to_inf_norm",
    "equal_partition", "bin_edges", "load_edges", "save_edges",
    "log_likelihood", "grad_m", "grad_factors", "regularizer", "reg_grads",
    "project", "initialize", "pgd_fit",
    "normalize_w", "best_ordered_partition", "select_k", "default_nu",
    "endpoints_from_segments",
    "hosvd", "hooi",
    "generate_truth", "sample_edges", "estimation_error", "expand_truth",
    "masked_prediction_error",
    "auto_L", "run_pipeline", "sweep_L", "compare_methods", "crossval",
    "__version__",
]
