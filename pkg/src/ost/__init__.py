"""Optimal spatio-temporal descriptor matching for zero-shot video recognition."""

from .core import (
    ClassEntry,
    DescriptorBank,
    EmbedMatrix,
    LossConfig,
    Marginals,
    SolverConfig,
    condition_on_category,
    load_descriptor_bank,
    read_embed_matrix,
    save_descriptor_bank,
    write_embed_matrix,
)
from .sinkhorn import (
    CostMatrix,
    SinkhornState,
    TransportPlan,
    build_cost_matrix,
    exact_ot_oracle,
    regularized_objective,
    sinkhorn_solve,
)

__version__ = "0.1.0"

__all__ = [
    "ClassEntry",
    "CostMatrix",
    "DescriptorBank",
    "EmbedMatrix",
    "LossConfig",
    "Marginals",
    "SinkhornState",
    "SolverConfig",
    "TransportPlan",
    "build_cost_matrix",
    "condition_on_category",
    "exact_ot_oracle",
    "load_descriptor_bank",
    "read_embed_matrix",
    "regularized_objective",
    "save_descriptor_bank",
    "sinkhorn_solve",
    "write_embed_matrix",
    "__version__",
]
