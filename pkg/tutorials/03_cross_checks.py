"""
Cross-checking the solvers against exact references
===================================================

Three independent ways to get the same number: a dense Bland-rule simplex on
the cycle-constraint LP, exhaustive enumeration of integer solutions, and the
two min-cost flow kernels on the planar dual network.
"""

import numpy as np

from ddunwrap import build_constraints, build_cycle_basis, build_grid_graph, check_total_unimodularity
from ddunwrap.decomposition import single_decomposition
from ddunwrap.mcf import build_dual_network, solve_cost_scaling, solve_network_simplex
from ddunwrap.oracle import integer_optimum, lp_from_graph, solve_lp_exact
from ddunwrap.phase import COST_UNIT

rng = np.random.default_rng(5)

# %%
# On a 3x3 grid with diagonals the LP relaxation already has an integral
# optimum: the constraint matrix is totally unimodular.
g = build_grid_graph(3, 3, 1)
for _ in range(5):
    dp = rng.integers(-1, 2, g.n_edges)
    p = lp_from_graph(g, dp, rng.random(g.n_edges))
    lp, ip = solve_lp_exact(p, check_integral=False), integer_optimum(p)
    if lp.status == "optimal":
        print(f"LP {lp.objective:.9f}   integer {ip.objective:.9f}   fractional entries: "
              f"{int(np.sum(np.abs(lp.x - np.rint(lp.x)) > 1e-9))}")
    else:
        print("infeasible gradients:", lp.status, ip.status)

cs = build_constraints(g, build_cycle_basis(g), rng.integers(-1, 2, g.n_edges))
tu = check_total_unimodularity(cs, max_order=4, samples=500)
print("determinants in {-1, 0, 1}:", tu.ok, "| examined per order:", tu.examined)

# %%
# Planar grids: the flow kernels and the LP agree to the last cost unit.
g = build_grid_graph(6, 6, 0)
faces = single_decomposition(g).subgraphs[0].faces
for _ in range(5):
    dp = rng.integers(-1, 2, g.n_edges)
    units = rng.integers(0, COST_UNIT + 1, (g.n_edges, 2))
    lp = solve_lp_exact(lp_from_graph(g, dp, units.astype(float)))
    if lp.status != "optimal":
        continue
    net = build_dual_network(faces, dp, cost_units=units)
    print(f"LP {int(round(lp.objective)):>9d}  cost scaling {solve_cost_scaling(net).objective_units:>9d}  "
          f"network simplex {solve_network_simplex(net).objective_units:>9d}")
