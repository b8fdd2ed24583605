import numpy as np
import pytest
from scipy.optimize import linprog

from ddunwrap.decomposition import build_decomposition, single_decomposition, trace_faces
from ddunwrap.graph import build_constraints, build_cycle_basis, build_grid_graph
from ddunwrap.mcf import (
    DualNetwork,
    InfeasibleFlowError,
    ResidueImbalanceError,
    build_dual_network,
    extract_primal_flows,
    face_residues,
    from_dimacs,
    solve_cost_scaling,
    solve_network_simplex,
    to_dimacs,
)
from ddunwrap.mcf.network import DimacsParseError
from ddunwrap.oracle import lp_from_graph, solve_lp_exact
from ddunwrap.phase import COST_UNIT
from ddunwrap.verify import random_planar_instance

SOLVE = [solve_cost_scaling, solve_network_simplex]
IDS = ["cost-scaling", "simplex"]


def network_lp(net):
    """Node-arc LP of the flow network itself, solved by HiGHS."""
    A = np.zeros((net.n_nodes, net.n_arcs))
    A[net.tail, np.arange(net.n_arcs)] += 1
    A[net.head, np.arange(net.n_arcs)] -= 1
    res = linprog(net.cost_units.astype(float), A_eq=A, b_eq=net.supply.astype(float),
                  bounds=list(zip(np.zeros(net.n_arcs), net.capacity.astype(float))), method="highs")
    return res


def conservation(net, flow):
    out = np.zeros(net.n_nodes, dtype=np.int64)
    np.add.at(out, net.tail, flow)
    np.add.at(out, net.head, -flow)
    return out - net.supply


def triangle_faces():
    edges = np.array([[0, 1], [1, 2], [0, 2]])
    return edges, trace_faces(3, edges, np.array([[0.0, 0], [1, 0], [0, 1]]))


def diamond():
    # s=0, a=1, b=2, t=3; s-a-t costs 1+2, s-b-t costs 2+3
    return DualNetwork(4, np.array([0, 1, 0, 2]), np.array([1, 3, 2, 3]), np.ones(4, dtype=np.int64),
                       np.array([1, 2, 2, 3]), np.array([1, 0, 0, -1]))


class TestBuildNetwork:
    def test_zero_gradients(self):
        g = build_grid_graph(4, 4, 0)
        s = single_decomposition(g).subgraphs[0]
        net = build_dual_network(s.faces, np.zeros(g.n_edges, dtype=int))
        assert not np.any(net.supply)
        assert net.n_arcs == 2 * g.n_edges

    def test_triangle_residue(self):
        edges, faces = triangle_faces()
        inner = 1 - faces.outer
        net = build_dual_network(faces, np.array([1, 0, 0]))
        assert net.supply[inner] == 1 and net.supply[faces.outer] == -1

    @pytest.mark.parametrize("seed", range(5))
    def test_residues_sum_to_zero(self, seed):
        rng = np.random.default_rng(seed)
        g = build_grid_graph(3, 3, 0)
        faces = single_decomposition(g).subgraphs[0].faces
        dp = rng.integers(-1, 2, g.n_edges)
        res = face_residues(faces, dp)
        # double entry: every edge adds d' to the face on its left and removes it from the right
        ledger = np.zeros(faces.n_faces, dtype=np.int64)
        for e in range(g.n_edges):
            ledger[faces.left[e]] += dp[e]
            ledger[faces.right[e]] -= dp[e]
        assert np.array_equal(res, ledger)
        assert res.sum() == 0

    def test_arc_layout(self):
        g = build_grid_graph(3, 4, 1)
        s = build_decomposition(g).subgraphs[1]
        net = build_dual_network(s.faces, np.zeros(len(s.edge_ids), int), arc_costs=np.linspace(0, 1, len(s.edge_ids)))
        assert np.array_equal(net.tail[0::2], net.head[1::2])
        assert np.array_equal(net.cost_units[0::2], net.cost_units[1::2])
        assert net.n_nodes == s.faces.n_faces

    def test_wrong_length(self):
        _, faces = triangle_faces()
        with pytest.raises(ValueError):
            build_dual_network(faces, np.zeros(4, dtype=int))

    def test_imbalance_is_a_hard_error(self):
        _, faces = triangle_faces()
        walks = [list(w) for w in faces.boundaries]
        walks[faces.outer] = walks[faces.outer][1:]  # drop one half-edge
        broken = type(faces)(faces.n_faces, faces.left, faces.right, faces.outer, walks)
        with pytest.raises(ResidueImbalanceError):
            build_dual_network(broken, np.array([1, 0, 0]))


@pytest.mark.parametrize("solve", SOLVE, ids=IDS)
class TestSolvers:
    def test_zero_residues(self, solve):
        g = build_grid_graph(3, 3, 0)
        s = single_decomposition(g).subgraphs[0]
        sol = solve(build_dual_network(s.faces, np.zeros(g.n_edges, int), arc_costs=np.ones(g.n_edges)))
        assert sol.objective_units == 0 and not np.any(sol.flow)

    def test_diamond(self, solve):
        sol = solve(diamond())
        assert sol.objective_units == 3
        assert sol.flow.tolist() == [1, 1, 0, 0]

    def test_negative_cost_cycle_is_saturated(self, solve):
        net = DualNetwork(2, np.array([0, 1]), np.array([1, 0]), np.array([2, 2]), np.array([-5, 1]),
                          np.zeros(2, dtype=np.int64))
        sol = solve(net)
        assert sol.flow.tolist() == [2, 2] and sol.objective_units == -8

    def test_infeasible_reports_cut(self, solve):
        net = DualNetwork(3, np.array([0, 1]), np.array([1, 2]), np.array([1, 1]), np.array([1, 1]),
                          np.array([2, 0, -2]))
        with pytest.raises(InfeasibleFlowError) as info:
            solve(net)
        cut = set(info.value.witness.tolist())
        assert 0 in cut and 2 not in cut
        leaving = sum(net.capacity[a] for a in range(net.n_arcs) if net.tail[a] in cut and net.head[a] not in cut)
        assert net.supply[list(cut)].sum() > leaving

    def test_unbalanced_supply(self, solve):
        net = diamond()
        bad = DualNetwork(4, net.tail, net.head, net.capacity, net.cost_units, np.array([1, 0, 0, 0]))
        with pytest.raises(ValueError):
            solve(bad)

    @pytest.mark.parametrize("seed", range(25))
    def test_random_against_network_lp(self, solve, seed):
        rng = np.random.default_rng(seed)
        g, faces, dp, cu = random_planar_instance(rng, negative=seed % 2 == 1)
        net = build_dual_network(faces, dp, cost_units=cu)
        lp = network_lp(net)
        if lp.status != 0:
            with pytest.raises(InfeasibleFlowError):
                solve(net)
            return
        sol = solve(net)
        assert sol.objective_units == round(lp.fun)
        assert not np.any(conservation(net, sol.flow))
        assert np.all((sol.flow >= 0) & (sol.flow <= net.capacity))
        assert sol.flow.dtype == np.int64


class TestAgreement:
    @pytest.mark.parametrize("seed", range(50))
    def test_solvers_match_primal_oracle(self, seed):
        rng = np.random.default_rng(1000 + seed)
        g, faces, dp, cu = random_planar_instance(rng, negative=False)
        net = build_dual_network(faces, dp, cost_units=cu)
        lp = solve_lp_exact(lp_from_graph(g, dp, cu / COST_UNIT), method="highs")
        if lp.status != "optimal":
            return
        a, b = solve_cost_scaling(net), solve_network_simplex(net)
        assert a.objective_units == b.objective_units == lp.objective_units

    @pytest.mark.parametrize("seed", range(50))
    def test_negative_costs_cross_solver(self, seed):
        rng = np.random.default_rng(5000 + seed)
        g, faces, dp, cu = random_planar_instance(rng, negative=True)
        cu[0, 0] = -abs(cu[0, 0]) - 1
        net = build_dual_network(faces, dp, cost_units=cu, capacity=2)
        a, b = solve_cost_scaling(net), solve_network_simplex(net)
        assert a.objective_units == b.objective_units

    @pytest.mark.parametrize("factor", [2, 3, 8, 16])
    def test_epsilon_factor_does_not_change_value(self, factor):
        rng = np.random.default_rng(77)
        g, faces, dp, cu = random_planar_instance(rng, negative=True)
        net = build_dual_network(faces, dp, cost_units=cu, capacity=3)
        assert solve_cost_scaling(net, factor).objective_units == solve_network_simplex(net).objective_units

    def test_bad_epsilon_factor(self):
        with pytest.raises(ValueError):
            solve_cost_scaling(diamond(), 1)

    def test_overflow_guard(self):
        net = diamond().with_costs(np.array([1, 2, 2, 2 ** 60]))
        with pytest.raises(OverflowError):
            solve_network_simplex(net)


class TestOptimalityCertificates:
    @pytest.mark.parametrize("seed", range(10))
    def test_complementary_slackness(self, seed):
        rng = np.random.default_rng(300 + seed)
        g, faces, dp, cu = random_planar_instance(rng, negative=True)
        net = build_dual_network(faces, dp, cost_units=cu, capacity=2)
        sol = solve_cost_scaling(net)
        p = sol.potentials
        rc = net.cost_units + p[net.tail] - p[net.head]
        eps = sol.epsilon + 1e-9
        assert np.all(rc[sol.flow > 0] <= eps)
        assert np.all(rc[sol.flow < net.capacity] >= -eps)


class TestPrimalFlows:
    def test_zero_flow(self):
        _, faces = triangle_faces()
        net = build_dual_network(faces, np.zeros(3, int))
        assert not np.any(extract_primal_flows(net, solve_cost_scaling(net)))

    def test_triangle_single_arc(self):
        edges, faces = triangle_faces()
        from ddunwrap.graph import UnwrapGraph

        g = UnwrapGraph(3, edges[np.lexsort((edges[:, 1], edges[:, 0]))], np.ones(3))
        order = [g.edge_index(*e) for e in edges]  # local -> canonical
        dp_local = np.array([1, 0, 0])
        net = build_dual_network(faces, dp_local, arc_costs=np.array([0.3, 0.5, 0.7]))
        x = extract_primal_flows(net, solve_network_simplex(net))
        assert x.sum() == 1
        dp = np.zeros(3, int)
        dp[order] = dp_local
        flows = np.zeros((3, 2), dtype=np.int64)
        flows[order] = x
        assert not np.any(build_constraints(g, build_cycle_basis(g), dp).residual(flows))

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("r", [1, 2])
    def test_subgraph_constraints_hold(self, seed, r):
        rng = np.random.default_rng(seed)
        g = build_grid_graph(5, 5, r)
        dp = rng.integers(-1, 2, g.n_edges)
        for s in build_decomposition(g).subgraphs:
            cu = rng.integers(-COST_UNIT // 3, COST_UNIT, size=(len(s.edge_ids), 2))
            net = build_dual_network(s.faces, dp[s.edge_ids], cost_units=cu, capacity=2)
            x = extract_primal_flows(net, solve_cost_scaling(net))
            cs = build_constraints(s.graph, build_cycle_basis(s.graph), dp[s.edge_ids])
            assert not np.any(cs.residual(x))


class TestDimacs:
    def test_round_trip(self):
        rng = np.random.default_rng(3)
        _, faces, dp, cu = random_planar_instance(rng, negative=True)
        net = build_dual_network(faces, dp, cost_units=cu)
        back = from_dimacs(to_dimacs(net, comment="random\ninstance"))
        for name in ("tail", "head", "capacity", "cost_units", "supply"):
            assert np.array_equal(getattr(back, name), getattr(net, name))
        assert solve_network_simplex(back).objective_units == solve_network_simplex(net).objective_units

    @pytest.mark.parametrize("text,where", [
        ("p max 2 1\n", "line 1"),
        ("p min 2 1\na 1 2 1 1 5\n", "line 2"),
        ("p min 2 1\nx 1\n", "line 2"),
        ("p min 2 2\na 1 2 0 1 5\n", "expected 2 arcs"),
        ("a 1 2 0 1 5\n", "line 1"),
        ("c nothing\n", "missing problem line"),
    ])
    def test_parse_errors(self, text, where):
        with pytest.raises(DimacsParseError, match=where):
            from_dimacs(text)
