"""Cost-scaling and network-simplex solvers for :class:`DualNetwork` instances."""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..phase import COST_UNIT
from . import _kernels
from .network import DualNetwork


class InfeasibleFlowError(RuntimeError):
    """Supplies cannot be routed within the arc capacities.

    ``witness`` is a node set ``S`` with ``supply(S)`` larger than the total
    capacity of arcs leaving ``S``.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


@dataclass
class FlowSolution:
    flow: np.ndarray
    objective_units: int
    potentials: Optional[np.ndarray] = None
    epsilon: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return self.objective_units / COST_UNIT


def _witness_cut(net: DualNetwork, flow: np.ndarray) -> np.ndarray:
    """Nodes reachable in the residual network from nodes with unrouted supply."""
    out = np.zeros(net.n_nodes, dtype=np.int64)
    np.add.at(out, net.tail, flow)
    np.add.at(out, net.head, -flow)
    start = np.flatnonzero(out < net.supply)
    seen = np.zeros(net.n_nodes, dtype=bool)
    seen[start] = True
    nbrs = [[] for _ in range(net.n_nodes)]
    for a in range(net.n_arcs):
        if flow[a] < net.capacity[a]:
            nbrs[net.tail[a]].append(net.head[a])
        if flow[a] > 0:
            nbrs[net.head[a]].append(net.tail[a])
    queue = deque(int(v) for v in start)
    while queue:
        v = queue.popleft()
        for w in nbrs[v]:
            if not seen[w]:
                seen[w] = True
                queue.append(w)
    return np.flatnonzero(seen)


def _solve(net: DualNetwork, kernel: str, alpha: int = 8) -> FlowSolution:
    t0 = time.perf_counter()
    tail, head = net.tail, net.head
    cap = np.asarray(net.capacity, dtype=np.int64)
    cost = np.asarray(net.cost_units, dtype=np.int64)
    if np.any(cap < 0):
        raise ValueError("capacities must be nonnegative")
    loops = tail == head
    neg = (cost < 0) & ~loops
    supply = np.array(net.supply, dtype=np.int64)
    if supply.sum() != 0:
        raise ValueError("supplies must sum to zero")
    # saturate negative-cost arcs and solve on their reversals
    np.add.at(supply, tail[neg], -cap[neg])
    np.add.at(supply, head[neg], cap[neg])
    keep = np.flatnonzero(~loops)
    t2 = np.where(neg, head, tail)[keep]
    h2 = np.where(neg, tail, head)[keep]
    c2 = np.abs(cost)[keep]
    u2 = cap[keep]
    # both kernels scale costs by about (n + 1)^2 internally
    nn = net.n_nodes + 2
    if (int(c2.max(initial=0)) + 1) * nn * nn * 16 >= 2 ** 63:
        raise OverflowError("arc costs too large for 64-bit cost scaling on this network")
    if kernel == "cost_scaling":
        f2, pot, feasible, st = _kernels.cost_scaling(net.n_nodes, t2, h2, u2, c2, supply, int(alpha))
        stats = {"pushes": int(st[0]), "relabels": int(st[1]), "phases": int(st[2])}
        scale = int(st[3])
    else:
        f2, pot, feasible, st = _kernels.network_simplex(net.n_nodes, t2, h2, u2, c2, supply)
        stats = {"pivots": int(st[0])}
        scale = 1
    flow = np.where(loops & (cost < 0), cap, 0).astype(np.int64)
    flow[keep] = np.where(neg[keep], u2 - f2, f2)
    if not feasible:
        raise InfeasibleFlowError(
            "face residues cannot be routed with the current arc capacities; "
            "raise the capacity bound", witness=_witness_cut(net, flow))
    stats["seconds"] = time.perf_counter() - t0
    potentials = pot[:net.n_nodes].astype(float) / scale
    return FlowSolution(
        flow=flow, objective_units=int(np.dot(flow, cost)), potentials=potentials,
        epsilon=1.0 / scale if kernel == "cost_scaling" else 0.0, stats=stats,
    )


def solve_cost_scaling(net: DualNetwork, epsilon_factor: int = 8) -> FlowSolution:
    """Goldberg-style cost scaling with FIFO push/relabel refinement.

    Costs are multiplied by ``n + 1`` internally, so the final 1-optimal
    flow is optimal for the integer costs. ``potentials`` are returned in
    cost units with the convention ``rc = cost + p[tail] - p[head]``.
    """
    if epsilon_factor < 2:
        raise ValueError("epsilon_factor must be at least 2")
    return _solve(net, "cost_scaling", epsilon_factor)


def solve_network_simplex(net: DualNetwork) -> FlowSolution:
    """Primal network simplex with a strongly feasible tree and block pivoting."""
    return _solve(net, "network_simplex")


SOLVERS = {
    "cost-scaling": solve_cost_scaling,
    "simplex": solve_network_simplex,
}
