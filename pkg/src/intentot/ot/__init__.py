from .core import (
    BACKEND,
    CostMatrix,
    SinkhornNumericalError,
    TransportPlan,
    build_cost_matrix,
    exact_ot_bruteforce,
    sinkhorn,
    tail_index,
    transport_cost,
)

__all__ = [
    "BACKEND",
    "CostMatrix",
    "SinkhornNumericalError",
    "TransportPlan",
    "build_cost_matrix",
    "exact_ot_bruteforce",
    "sinkhorn",
    "tail_index",
    "transport_cost",
]
