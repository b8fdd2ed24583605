"""Phase unwrapping with redundant arcs, solved by dual decomposition into planar min-cost flow problems."""
from .decomposition import (
    Decomposition,
    build_decomposition,
    check_coverage_condition,
    k5_decomposition,
    single_decomposition,
)
from .dual import DDConfig, RunReport, run
from .graph import (
    UnwrapGraph,
    build_constraints,
    build_cycle_basis,
    build_grid_graph,
    check_total_unimodularity,
    complete_graph,
)
from .phase import (
    WrappedField,
    UnwrapResult,
    compute_costs,
    inconsistency,
    integrate_flows,
    synthesize,
    wrapped_gradient,
)

__version__ = "0.1.0"

__all__ = [
    "DDConfig", "Decomposition", "RunReport", "UnwrapGraph", "UnwrapResult", "WrappedField",
    "build_constraints", "build_cycle_basis", "build_decomposition", "build_grid_graph",
    "check_coverage_condition", "check_total_unimodularity", "complete_graph", "compute_costs",
    "inconsistency", "integrate_flows", "k5_decomposition", "run", "single_decomposition",
    "synthesize", "wrapped_gradient",
]
