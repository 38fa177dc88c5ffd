"""Temporal point process graphical models.

Simulation, discretized l1-penalized estimation and evaluation of
multivariate point processes with a bounded nonlinear link.
"""

from tppg.core import (
    EventData,
    EventStream,
    KernelSpec,
    LinkSpec,
    ModelSpec,
    intensity,
    kernel_eval,
    link_eval,
)
from tppg.simulate import SimConfig, mean_count_check, simulate
from tppg.design import DesignMatrix, choose_M, discretize
from tppg.estimate import (
    FitConfig,
    FitResult,
    NodeParams,
    fit,
    fit_node,
    kkt_residual,
    minimize_l1,
    node_gradient,
    node_loss,
    soft_threshold,
)
from tppg.selection import CVConfig, CVResult, cross_validate, fit_cv, lambda_grid, lambda_max
from tppg.metrics import (
    ROCCurve,
    SignedGraph,
    extract_graph,
    make_structure,
    rel_fro_error,
    rel_l1_error,
    roc_over_path,
)
from tppg.bootstrap import BootstrapConfig, BootstrapResult, bootstrap_graph, lambda_for_sparsity

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig",
    "BootstrapResult",
    "CVConfig",
    "CVResult",
    "DesignMatrix",
    "EventData",
    "EventStream",
    "FitConfig",
    "FitResult",
    "KernelSpec",
    "LinkSpec",
    "ModelSpec",
    "NodeParams",
    "ROCCurve",
    "SignedGraph",
    "SimConfig",
    "bootstrap_graph",
    "choose_M",
    "cross_validate",
    "discretize",
    "extract_graph",
    "fit",
    "fit_cv",
    "fit_node",
    "intensity",
    "kernel_eval",
    "kkt_residual",
    "lambda_for_sparsity",
    "lambda_grid",
    "lambda_max",
    "link_eval",
    "make_structure",
    "mean_count_check",
    "minimize_l1",
    "node_gradient",
    "node_loss",
    "rel_fro_error",
    "rel_l1_error",
    "roc_over_path",
    "simulate",
    "soft_threshold",
]
