"""Dual decomposition over planar subgraphs with a projected subgradient loop.

Multipliers are kept as integers in ``1 / COST_UNIT`` units. Every subproblem
then solves exactly the integer-cost problem that the dual value is computed
from, so each recorded dual value is an exact lower bound on the primal
optimum, and the per-edge multiplier sums are exactly zero.
"""
from __future__ import annotations

import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .decomposition import Decomposition, check_coverage_condition
from .graph import UnwrapGraph, build_cycle_basis
from .mcf import SOLVERS, build_dual_network
from .phase import (
    COST_UNIT,
    WrappedField,
    edge_wrapped_gradients,
    integrate_flows,
    integrate_tree,
    net_flow,
    quantize_costs,
)

CONSTANT = "constant"
DECAYING = "decaying"

# coverage is checked automatically only below this edge count (GF(2) rank is quadratic)
COVERAGE_CHECK_LIMIT = 4000


@dataclass(frozen=True)
class DDConfig:
    """Settings for :func:`run`.

    step_rule
        ``"constant"`` steps by ``alpha`` times the centred subgradient.
        ``"polyak"`` (default) steps by ``alpha * (U - L) / |d|^2`` along a
        deflected direction ``d``, where ``U`` is the best primal objective
        found so far and ``L`` the best dual value.
    alpha0
        Initial ``alpha`` for the constant rule.
    polyak_scale
        Initial ``alpha`` for the Polyak rule.
    deflection
        Weight of the previous direction when the new subgradient points
        against it (``0`` disables deflection; Polyak rule only).
    window
        Iterations over which the relative change of the best dual value is
        measured; ``window=1`` compares consecutive iterations.
    gap_tolerance
        Stop once ``(U - best_dual) <= gap_tolerance * |U|``.
    """

    alpha0: float = 0.1
    max_iter: int = 2000
    window: int = 200
    plateau_threshold: float = 0.02
    converge_threshold: float = 0.001
    step_rule: str = "polyak"
    polyak_scale: float = 1.5
    deflection: float = 1.5
    gap_tolerance: float = 1e-4
    solver: str = "cost-scaling"
    capacity: int = 1
    workers: int = 1
    check_coverage: Optional[bool] = None

    def __post_init__(self):
        if self.alpha0 <= 0 or self.polyak_scale <= 0:
            raise ValueError("alpha0 and polyak_scale must be positive")
        if not 0 <= self.deflection < 2:
            raise ValueError("deflection must lie in [0, 2)")
        if self.step_rule not in ("constant", "polyak"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.max_iter < 1 or self.window < 1:
            raise ValueError("max_iter and window must be at least 1")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; expected one of {sorted(SOLVERS)}")
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")


@dataclass
class DualState:
    """Mutable state of the subgradient loop.

    ``lambda_units`` has shape ``(K, E, 2)``: one multiplier per subgraph and
    arc variable, zero where the subgraph does not contain the edge.
    """

    lambda_units: np.ndarray
    step_size: float
    phase: str = CONSTANT
    iteration: int = 0
    best_dual_units: Optional[int] = None
    dual_history: list = field(default_factory=list)
    window_start: int = 0
    window_ref: Optional[int] = None
    transition_iter: Optional[int] = None
    direction: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, d: Decomposition, alpha0: float = 0.1) -> "DualState":
        return cls(np.zeros((d.n_subgraphs, d.graph.n_edges, 2), dtype=np.int64), float(alpha0))

    @property
    def lam(self) -> np.ndarray:
        return self.lambda_units / COST_UNIT

    @property
    def best_dual(self) -> float:
        return -np.inf if self.best_dual_units is None else self.best_dual_units / COST_UNIT

    def drift(self) -> float:
        """Largest per-arc ``|sum_k lambda^k|`` (zero by construction)."""
        return float(np.abs(self.lambda_units.sum(axis=0)).max(initial=0)) / COST_UNIT


@dataclass(frozen=True, eq=False)
class ConsensusSolution:
    """Primal answer assembled from the subgraph copies.

    ``values`` are the per-edge arc flows chosen by the tie rule; ``flows`` are
    the cycle-consistent flows actually used for integration (equal to
    ``values`` when those already satisfy every cycle constraint).
    """

    values: np.ndarray
    agreement_fraction: float
    flows: np.ndarray
    primal_objective_units: int
    repaired: bool

    @property
    def primal_objective(self) -> float:
        return self.primal_objective_units / COST_UNIT


@dataclass(frozen=True)
class ScheduleDecision:
    alpha: float
    phase: str
    terminate: bool
    rel_change: Optional[float]


# --------------------------------------------------------------------------
# problem setup
# --------------------------------------------------------------------------


def split_cost_units(cost_units, d: Decomposition) -> np.ndarray:
    """Integer cost shares, shape ``(K, E)``, summing exactly to ``cost_units``.

    Each edge's cost is divided evenly among its subgraphs; leftover units go
    to the lowest-indexed members.
    """
    cu = np.asarray(cost_units, dtype=np.int64)
    member = d.membership
    m = member.sum(axis=1)
    base, rem = cu // m, cu % m
    rank = np.cumsum(member, axis=1) - 1  # position of subgraph k among the edge's members
    shares = base[:, None] + (rank < rem[:, None])
    return np.where(member, shares, 0).T.astype(np.int64)


def split_costs(c, d: Decomposition) -> np.ndarray:
    """Per-subgraph real cost shares ``c^k_ij = c_ij / |G_e(i,j)|``, shape ``(K, E)``.

    ``c`` is a :class:`CostModel` or per-edge real costs. Shares are rounded to
    cost units so that they re-add to the quantised cost exactly.
    """
    units = getattr(c, "units", None)
    if units is None:
        units = quantize_costs(c)
    return split_cost_units(units, d) / COST_UNIT


@dataclass(eq=False)
class DDProblem:
    """Precomputed per-subgraph data reused by every iteration."""

    graph: UnwrapGraph
    decomposition: Decomposition
    delta_prime: np.ndarray
    cost_units: np.ndarray
    shares: np.ndarray
    networks: list
    trees: list
    full_tree: object
    capacity: int
    solver: str

    @classmethod
    def build(cls, g: UnwrapGraph, d: Decomposition, delta_prime, capacity: int = 1,
              solver: str = "cost-scaling", cost_units=None) -> "DDProblem":
        if d.graph.n_edges != g.n_edges or not np.array_equal(d.graph.edges, g.edges):
            raise ValueError("decomposition was built for a different graph")
        dp = np.asarray(delta_prime, dtype=np.int64)
        cu = quantize_costs(g.arc_costs) if cost_units is None else np.asarray(cost_units, dtype=np.int64)
        shares = split_cost_units(cu, d)
        nets, trees = [], []
        for s in d.subgraphs:
            local = np.zeros((len(s.edge_ids), 2), dtype=np.int64)
            nets.append(build_dual_network(s.faces, dp[s.edge_ids], cost_units=local, capacity=capacity))
            trees.append(build_cycle_basis(s.graph, cycles=False))
        full_tree = build_cycle_basis(g, cycles=False)
        return cls(g, d, dp, cu, shares, nets, trees, full_tree, int(capacity), solver)

    @property
    def n_subgraphs(self) -> int:
        return self.decomposition.n_subgraphs

    def subgraph_costs(self, k: int, state: DualState) -> np.ndarray:
        ids = self.decomposition.subgraphs[k].edge_ids
        return self.shares[k, ids][:, None] + state.lambda_units[k, ids, :]

    def primal_units(self, flows) -> int:
        """``sum c . delta`` over the full graph in cost units."""
        fl = np.asarray(flows, dtype=np.int64).reshape(-1, 2)
        return int(self.cost_units @ fl.sum(axis=1))

    def candidate_from_subgraph(self, k: int, local_flows) -> tuple:
        """Cycle-consistent full-graph flows obtained by integrating subgraph ``k``'s copy.

        Returns ``(flows, objective_units, within_capacity)``.
        """
        s = self.decomposition.subgraphs[k]
        n = integrate_tree(self.trees[k], s.graph, self.delta_prime[s.edge_ids], net_flow(local_flows))
        return self._flows_from_counts(n)

    def _flows_from_counts(self, n):
        g = self.graph
        x = self.delta_prime - (n[g.edges[:, 1]] - n[g.edges[:, 0]])
        flows = np.stack([np.maximum(x, 0), np.maximum(-x, 0)], axis=1)
        return flows, int(self.cost_units @ np.abs(x)), bool(np.abs(x).max(initial=0) <= self.capacity)


# --------------------------------------------------------------------------
# algorithm steps
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SubproblemResult:
    flows: np.ndarray  # (E_k, 2) local arc flows
    objective_units: int
    seconds: float


def solve_subproblem(problem: DDProblem, k: int, state: DualState) -> SubproblemResult:
    """Minimise ``(c^k + lambda^k) . delta^k`` over the cycle constraints of subgraph ``k``."""
    cost = problem.subgraph_costs(k, state)
    net = problem.networks[k].with_costs(cost.reshape(-1))
    t0 = time.perf_counter()
    sol = SOLVERS[problem.solver](net)
    dt = time.perf_counter() - t0
    return SubproblemResult(sol.flow.reshape(-1, 2), sol.objective_units, dt)


def global_flows(problem: DDProblem, results) -> np.ndarray:
    """Stack local subgraph flows into a ``(K, E, 2)`` array (zero off-membership)."""
    out = np.zeros((problem.n_subgraphs, problem.graph.n_edges, 2), dtype=np.int64)
    for k, (s, r) in enumerate(zip(problem.decomposition.subgraphs, results)):
        flows = getattr(r, "flows", r)
        out[k, s.edge_ids] = flows
    return out


def centred_subgradient(flows: np.ndarray, membership: np.ndarray) -> np.ndarray:
    """``delta^k - mean_q delta^q`` per subgraph and arc, zero off-membership."""
    member = membership.T[:, :, None]
    m = membership.sum(axis=1)[None, :, None]
    return (flows - flows.sum(axis=0, keepdims=True) / m) * member


def dual_increment(flows: np.ndarray, membership: np.ndarray, alpha: float,
                   direction: Optional[np.ndarray] = None) -> np.ndarray:
    """Integer step ``alpha * direction`` in cost units, zero-sum per arc.

    ``direction`` defaults to the centred subgradient of ``flows``. Rounding
    residue is absorbed by the lowest-indexed member of each edge.
    """
    K, E, _ = flows.shape
    member = membership.T[:, :, None]  # (K, E, 1)
    if direction is None:
        m = membership.sum(axis=1)[None, :, None]
        total = flows.sum(axis=0, keepdims=True)
        num = (m * flows - total) * member  # m * (delta - mean)
        step = np.rint(alpha * COST_UNIT * num / m).astype(np.int64) * member
    else:
        step = np.rint(alpha * COST_UNIT * direction).astype(np.int64) * member
    resid = step.sum(axis=0)  # (E, 2)
    first = np.argmax(membership, axis=1)
    step[first, np.arange(E)] -= resid
    return step


def update_duals(state: DualState, flows: np.ndarray, d: Decomposition, alpha: Optional[float] = None,
                 direction: Optional[np.ndarray] = None) -> DualState:
    """Apply one multiplier step to ``state`` (in place) and return it.

    ``flows`` is the ``(K, E, 2)`` array of subproblem optima; ``alpha``
    defaults to ``state.step_size`` and ``direction`` to the centred
    subgradient.
    """
    a = state.step_size if alpha is None else alpha
    state.lambda_units += dual_increment(flows, d.membership, a, direction)
    return state


def deflect(state: DualState, g: np.ndarray, weight: float) -> np.ndarray:
    """Combine subgradient ``g`` with the previous direction and store the result.

    When ``g`` makes an obtuse angle with the previous direction ``d`` the new
    direction is ``g - weight * (g.d / |d|^2) d``, which removes most of the
    zig-zag component; otherwise ``g`` is used unchanged.
    """
    d = state.direction
    if weight > 0 and d is not None:
        dot = float(np.sum(g * d))
        if dot < 0:
            g = g - (weight * dot / float(np.sum(d * d))) * d
    state.direction = g
    return g


def step_length(state: DualState, flows: np.ndarray, d: Decomposition, dual_units: int,
                primal_units: Optional[int], config: "DDConfig", direction: Optional[np.ndarray] = None) -> float:
    """Step for the next multiplier update under ``config.step_rule``.

    ``dual_units`` is the lower bound used in the Polyak target (the best
    dual value in :func:`run`) and ``direction`` the search direction
    (default: centred subgradient). Without a primal bound yet, the Polyak
    rule falls back to a normalised step ``alpha / |d|``.
    """
    if config.step_rule == "constant":
        return state.step_size
    if direction is None:
        direction = centred_subgradient(flows, d.membership)
    g2 = float(np.sum(direction ** 2))
    if g2 == 0.0:
        return 0.0
    if primal_units is None:
        return state.step_size / np.sqrt(g2)
    return state.step_size * max(primal_units - dual_units, 0) / COST_UNIT / g2


def clip_step(alpha: float, direction: np.ndarray, limit_units: int) -> float:
    """Shrink ``alpha`` so that no multiplier moves by more than ``limit_units``."""
    peak = float(np.abs(direction).max(initial=0))
    if peak == 0 or alpha * peak * COST_UNIT <= limit_units:
        return alpha
    return limit_units / (peak * COST_UNIT)


def dual_objective_units(state: DualState, flows: np.ndarray, shares_units: np.ndarray) -> int:
    """``sum_k (c^k + lambda^k) . delta^k`` in cost units."""
    coeff = shares_units[:, :, None] + state.lambda_units
    return int(np.sum(coeff * flows))


def dual_objective(state: DualState, flows: np.ndarray, shares_units: np.ndarray) -> float:
    return dual_objective_units(state, flows, shares_units) / COST_UNIT


def relative_change(old: float, new: float) -> float:
    scale = max(abs(new), abs(old))
    if scale == 0:
        return 0.0
    return abs(new - old) / scale


def schedule_transition(phase: str, rel_change: float, plateau: float = 0.02,
                        converge: float = 0.001) -> tuple:
    """Schedule rule for one measured relative change.

    Returns ``(phase, halve, terminate)``. In the constant phase a change below
    ``plateau`` switches to the decaying phase and halves the step. In the
    decaying phase a change below ``converge`` terminates and a change below
    ``plateau`` halves the step again.
    """
    if phase == CONSTANT:
        if rel_change < plateau:
            return DECAYING, True, False
        return CONSTANT, False, False
    if rel_change < converge:
        return DECAYING, False, True
    return DECAYING, rel_change < plateau, False


def step_schedule(state: DualState, new_objective_units: int, config: DDConfig = DDConfig()) -> ScheduleDecision:
    """Record a dual value, update the best bound and apply the step-size rule.

    The relative change of the best dual value is measured over
    ``config.window`` iterations.
    """
    state.dual_history.append(new_objective_units / COST_UNIT)
    if state.best_dual_units is None or new_objective_units > state.best_dual_units:
        state.best_dual_units = int(new_objective_units)
    if state.window_ref is None:
        state.window_ref = state.best_dual_units
        state.window_start = state.iteration
    rel = None
    terminate = False
    if state.iteration - state.window_start >= config.window:
        rel = relative_change(state.window_ref, state.best_dual_units)
        phase, halve, terminate = schedule_transition(
            state.phase, rel, config.plateau_threshold, config.converge_threshold)
        if phase != state.phase:
            state.transition_iter = state.iteration
        state.phase = phase
        if halve and config.step_rule == "constant":
            # the Polyak step already shrinks with the gap; halving its scale stalls progress
            state.step_size /= 2.0
        state.window_ref = state.best_dual_units
        state.window_start = state.iteration
    return ScheduleDecision(state.step_size, state.phase, terminate, rel)


def extract_consensus(flows: np.ndarray, problem: DDProblem, tie_rule: str = "lowest") -> ConsensusSolution:
    """Per-edge consensus of the subgraph copies with a cycle-consistency repair.

    An edge agrees when every subgraph containing it holds the same arc flows.
    Disagreeing edges take the copy of the lowest-indexed subgraph. If the
    resulting flows violate a cycle constraint, they are replaced by the
    flows implied by integrating along a spanning tree of the full graph.
    """
    if tie_rule != "lowest":
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    d = problem.decomposition
    member = d.membership
    E = member.shape[0]
    first = np.argmax(member, axis=1)
    values = flows[first, np.arange(E)]
    same = (flows == values[None]).all(axis=2) | ~member.T
    agree = same.all(axis=0)
    frac = float(agree.mean()) if E else 1.0

    g = problem.graph
    n = integrate_tree(problem.full_tree, g, problem.delta_prime, net_flow(values))
    x = net_flow(values)
    consistent = np.array_equal(x, problem.delta_prime - (n[g.edges[:, 1]] - n[g.edges[:, 0]]))
    if consistent:
        return ConsensusSolution(values, frac, values, problem.primal_units(values), False)
    rep, units, _ = problem._flows_from_counts(n)
    return ConsensusSolution(values, frac, rep, units, True)


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------


@dataclass
class RunReport:
    """Per-iteration trace and final metrics of one dual decomposition run."""

    config: dict
    n_subgraphs: int
    iterations: int = 0
    converged: bool = False
    reason: str = ""
    dual_units: list = field(default_factory=list)
    best_dual_units: list = field(default_factory=list)
    best_primal_units: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    agreement: list = field(default_factory=list)
    phases: list = field(default_factory=list)
    phase_transition_iter: Optional[int] = None
    coverage: Optional[bool] = None
    final_objective_units: Optional[int] = None
    final_agreement: float = 0.0
    repaired: bool = False
    max_lambda_drift: float = 0.0
    timings: dict = field(default_factory=dict)

    @property
    def dual_history(self) -> list:
        return [v / COST_UNIT for v in self.dual_units]

    @property
    def best_dual_history(self) -> list:
        return [v / COST_UNIT for v in self.best_dual_units]

    @property
    def best_dual(self) -> float:
        return self.best_dual_units[-1] / COST_UNIT if self.best_dual_units else -np.inf

    @property
    def best_primal(self) -> float:
        last = self.best_primal_units[-1] if self.best_primal_units else None
        return np.inf if last is None else last / COST_UNIT

    @property
    def final_objective(self) -> Optional[float]:
        u = self.final_objective_units
        return None if u is None else u / COST_UNIT

    def trace_rows(self) -> list:
        return [
            {"iter": i + 1, "dual": self.dual_units[i] / COST_UNIT,
             "best_dual": self.best_dual_units[i] / COST_UNIT, "alpha": self.alpha[i],
             "agreement": self.agreement[i], "phase": self.phases[i]}
            for i in range(len(self.dual_units))
        ]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "n_subgraphs": self.n_subgraphs,
            "iterations": self.iterations,
            "converged": self.converged,
            "reason": self.reason,
            "coverage": self.coverage,
            "phase_transition_iter": self.phase_transition_iter,
            "trace": self.trace_rows(),
            "final": {
                "best_dual": self.best_dual if self.best_dual_units else None,
                "best_primal": None if np.isinf(self.best_primal) else self.best_primal,
                "objective": self.final_objective,
                "agreement": self.final_agreement,
                "repaired": self.repaired,
                "max_lambda_drift": self.max_lambda_drift,
            },
            "timings": self.timings,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def run(f: WrappedField, g: UnwrapGraph, d: Decomposition, config: DDConfig = DDConfig(),
        delta_prime=None):
    """Unwrap ``f`` by dual decomposition over ``d``.

    Edge costs are taken from ``g.arc_costs``. Returns ``(UnwrapResult,
    RunReport)``; ``report.converged`` is false when the iteration cap was hit,
    in which case the best primal solution found so far is returned.
    """
    t_start = time.perf_counter()
    dp = edge_wrapped_gradients(f.psi, g) if delta_prime is None else np.asarray(delta_prime, dtype=np.int64)
    problem = DDProblem.build(g, d, dp, config.capacity, config.solver)
    report = RunReport(config=asdict(config), n_subgraphs=d.n_subgraphs)

    check = config.check_coverage
    if check is None:
        check = g.n_edges <= COVERAGE_CHECK_LIMIT
    if check:
        report.coverage = check_coverage_condition(d)
        if not report.coverage:
            warnings.warn("subgraph cycle bases do not span the cycle space; the dual bound may not be tight",
                          RuntimeWarning, stacklevel=2)

    theta0 = config.polyak_scale if config.step_rule == "polyak" else config.alpha0
    state = DualState.initial(d, theta0)
    # a multiplier beyond the total arc cost cannot change any subproblem usefully
    step_cap = max(int(problem.cost_units.sum()), COST_UNIT)
    best = None  # (units, flows)
    solver_seconds = 0.0
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 and d.n_subgraphs > 1 else None
    flows = None
    try:
        while True:
            state.iteration += 1
            if pool is not None:
                results = list(pool.map(lambda k: solve_subproblem(problem, k, state), range(d.n_subgraphs)))
            else:
                results = [solve_subproblem(problem, k, state) for k in range(d.n_subgraphs)]
            solver_seconds += sum(r.seconds for r in results)
            flows = global_flows(problem, results)
            dual_u = sum(r.objective_units for r in results)
            decision = step_schedule(state, dual_u, config)

            consensus = extract_consensus(flows, problem)
            cands = [(consensus.primal_objective_units, consensus.flows,
                      np.abs(net_flow(consensus.flows)).max(initial=0) <= config.capacity)]
            for k, r in enumerate(results):
                fl, units, ok = problem.candidate_from_subgraph(k, r.flows)
                cands.append((units, fl, ok))
            for units, fl, ok in cands:
                if ok and (best is None or units < best[0]):
                    best = (units, fl)

            if config.step_rule == "polyak":
                direction = deflect(state, centred_subgradient(flows, d.membership), config.deflection)
                alpha = step_length(state, flows, d, state.best_dual_units,
                                    None if best is None else best[0], config, direction)
                alpha = clip_step(alpha, direction, step_cap)
            else:
                direction = None
                alpha = step_length(state, flows, d, dual_u, None, config)
            report.dual_units.append(int(dual_u))
            report.best_dual_units.append(int(state.best_dual_units))
            report.best_primal_units.append(None if best is None else int(best[0]))
            report.alpha.append(alpha)
            report.agreement.append(consensus.agreement_fraction)
            report.phases.append(state.phase)

            if best is not None and best[0] - state.best_dual_units <= config.gap_tolerance * abs(best[0]):
                report.reason, report.converged = "certified", True
                break
            if decision.terminate:
                report.reason, report.converged = "plateau", True
                break
            if state.iteration >= config.max_iter:
                report.reason, report.converged = "iteration-cap", False
                break
            if not centred_subgradient(flows, d.membership).any():
                # all copies agree: zero is a subgradient, so the dual bound is maximal
                report.reason, report.converged = "stationary", True
                break
            before = state.lambda_units.copy()
            update_duals(state, flows, d, alpha, direction)
            if np.array_equal(before, state.lambda_units):
                report.reason, report.converged = "step-underflow", True
                break
    finally:
        if pool is not None:
            pool.shutdown()

    report.iterations = state.iteration
    report.phase_transition_iter = state.transition_iter
    report.max_lambda_drift = state.drift()
    final = extract_consensus(flows, problem)
    report.final_agreement = final.agreement_fraction
    use = final.flows
    if final.repaired or (best is not None and best[0] < final.primal_objective_units):
        if best is not None:
            use = best[1]
    report.repaired = use is not final.values
    report.final_objective_units = problem.primal_units(use)
    result = integrate_flows(f, g, use, basis=problem.full_tree, delta_prime=dp)
    report.timings = {"solver_seconds": solver_seconds, "total_seconds": time.perf_counter() - t_start}
    return result, report
