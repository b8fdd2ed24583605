"""Minimum-cost flow on face-dual networks of planar subgraphs."""
from .network import (
    DualNetwork,
    ResidueImbalanceError,
    build_dual_network,
    extract_primal_flows,
    face_residues,
    from_dimacs,
    to_dimacs,
)
from .solvers import (
    SOLVERS,
    FlowSolution,
    InfeasibleFlowError,
    solve_cost_scaling,
    solve_network_simplex,
)

__all__ = [
    "DualNetwork", "FlowSolution", "InfeasibleFlowError", "ResidueImbalanceError", "SOLVERS",
    "build_dual_network", "extract_primal_flows", "face_residues", "from_dimacs",
    "solve_cost_scaling", "solve_network_simplex", "to_dimacs",
]
