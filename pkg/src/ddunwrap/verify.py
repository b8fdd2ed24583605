"""Quick self-check suite behind ``ddunwrap verify``.

Each check returns ``(name, passed, detail)``. The checks are small versions
of the test-suite properties: total unimodularity, tight relaxation, flow
solver agreement with the LP oracle and dual decomposition on K5.
"""
from __future__ import annotations

import numpy as np

from .decomposition import check_coverage_condition, k5_decomposition, single_decomposition
from .dual import DDConfig, run
from .graph import build_constraints, build_cycle_basis, build_grid_graph, check_total_unimodularity, complete_graph
from .mcf import build_dual_network, solve_cost_scaling, solve_network_simplex
from .oracle import lp_from_graph, solve_lp_exact, verify_tight_relaxation
from .phase import COST_UNIT, WrappedField


def check_tu(seed: int = 0):
    out = []
    rng = np.random.default_rng(seed)
    for name, g in (("K5", complete_graph(5)), ("4x4 r=1", build_grid_graph(4, 4, 1))):
        cs = build_constraints(g, build_cycle_basis(g), rng.integers(-1, 2, g.n_edges))
        rep = check_total_unimodularity(cs, max_order=4, samples=2000, seed=seed)
        out.append((f"total unimodularity {name}", rep.ok, f"{rep.examined} submatrices"))
    return out


def check_tight_relaxation(n: int = 20, seed: int = 0):
    rng = np.random.default_rng(seed)
    out = []
    for name, make in (("K5", lambda: complete_graph(5)), ("3x3 r=1", lambda: build_grid_graph(3, 3, 1))):
        ok = 0
        for _ in range(n):
            g = make()
            p = lp_from_graph(g, rng.integers(-1, 2, g.n_edges), rng.random(g.n_edges))
            ok += verify_tight_relaxation(p)
        out.append((f"tight relaxation {name}", ok == n, f"{ok}/{n}"))
    return out


def random_planar_instance(rng, negative: bool = False):
    """Random 4-neighbour grid flow instance: ``(graph, faces, delta_prime, cost_units)``."""
    rows, cols = int(rng.integers(2, 7)), int(rng.integers(2, 7))
    g = build_grid_graph(rows, cols, 0)
    s = single_decomposition(g).subgraphs[0]
    dp = rng.integers(-1, 2, g.n_edges)
    lo = -COST_UNIT // 2 if negative else 0
    cu = rng.integers(lo, COST_UNIT + 1, size=(g.n_edges, 2))
    return g, s.faces, dp, cu


def check_mcf(n: int = 30, seed: int = 0):
    rng = np.random.default_rng(seed)
    ok = 0
    infeasible = 0
    for _ in range(n):
        g, faces, dp, cu = random_planar_instance(rng, negative=bool(rng.integers(2)))
        p = lp_from_graph(g, dp, cu.astype(float))
        lp = solve_lp_exact(p, method="highs")
        net = build_dual_network(faces, dp, cost_units=cu)
        if lp.status != "optimal":
            infeasible += 1
            ok += 1
            continue
        a = solve_cost_scaling(net).objective_units
        b = solve_network_simplex(net).objective_units
        ok += a == b == int(round(lp.objective))
    return [("flow solvers match LP oracle", ok == n, f"{ok}/{n} ({infeasible} infeasible)")]


def check_k5_dual(n: int = 5, seed: int = 0):
    rng = np.random.default_rng(seed)
    ok = 0
    for _ in range(n):
        d = k5_decomposition(np.rint(rng.random(10) * COST_UNIT) / COST_UNIT)
        g = d.graph
        dp = rng.integers(-1, 2, g.n_edges)
        opt = solve_lp_exact(lp_from_graph(g, dp))
        if opt.status != "optimal":
            ok += 1
            continue
        f = WrappedField(np.zeros((1, 5)))
        _, rep = run(f, g, d, DDConfig(), delta_prime=dp)
        opt_units = int(np.rint(opt.objective * COST_UNIT))
        close = opt_units - rep.best_dual_units[-1] <= 1e-3 * max(abs(opt_units), 1)
        ok += close and max(rep.dual_units) <= opt_units and check_coverage_condition(d)
    return [("dual decomposition on K5 reaches the optimum", ok == n, f"{ok}/{n}")]


def run_all(quick: bool = True):
    n = 10 if quick else 50
    results = []
    results += check_tu()
    results += check_tight_relaxation(n)
    results += check_mcf(3 * n)
    results += check_k5_dual(max(3, n // 2))
    return results

