"""Exact reference solvers for small unwrapping problems.

``solve_lp_exact`` runs a dense bounded-variable simplex with Bland's rule on
the cycle-constraint LP. ``solve_brute_force`` enumerates binary arc vectors;
``solve_potential_enumeration`` enumerates integer cycle counts instead, which
reaches graphs with too many arc variables for 2^n enumeration.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graph import UnwrapGraph, build_cycle_basis, build_constraints
from .phase import COST_UNIT

INTEGRALITY_TOL = 1e-7
BRUTE_FORCE_LIMIT = 24


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DenseLP:
    """``min c.x  s.t.  A x = b,  0 <= x <= upper``.

    ``graph``/``delta_prime`` are kept when the LP was built from an unwrapping
    graph; the potential enumerator needs them.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    upper: np.ndarray
    graph: Optional[UnwrapGraph] = None
    delta_prime: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2:
            raise ValueError("A must be 2-D")
        m, n = A.shape
        if np.asarray(self.b).shape != (m,) or np.asarray(self.c).shape != (n,):
            raise ValueError("inconsistent LP dimensions")
        if not np.all(np.isin(A, (-1.0, 0.0, 1.0))):
            raise ValueError("constraint entries must be in {-1, 0, 1}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        object.__setattr__(self, "upper", np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy())

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    def permuted(self, row_perm=None, col_perm=None) -> "DenseLP":
        rp = np.arange(self.A.shape[0]) if row_perm is None else np.asarray(row_perm)
        cp = np.arange(self.n_vars) if col_perm is None else np.asarray(col_perm)
        return DenseLP(self.A[np.ix_(rp, cp)], self.b[rp], self.c[cp], self.upper[cp])


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float = np.nan
    x: Optional[np.ndarray] = None
    pivots: int = 0

    @property
    def objective_units(self) -> int:
        return int(np.rint(self.objective * COST_UNIT))


def lp_from_graph(g: UnwrapGraph, delta_prime, costs=None, capacity: int = 1, basis=None) -> DenseLP:
    """Cycle-constraint LP over the ``2E`` arc variables of ``g``.

    ``costs`` may be per edge (shared by both arcs) or per arc, shape ``(E, 2)``;
    defaults to ``g.arc_costs``.
    """
    basis = build_cycle_basis(g) if basis is None else basis
    cs = build_constraints(g, basis, delta_prime)
    c = g.arc_costs if costs is None else np.asarray(costs, dtype=float)
    c = np.stack([c, c], axis=1).reshape(-1) if c.ndim == 1 else c.reshape(-1)
    return DenseLP(cs.matrix.toarray(), cs.rhs, c, capacity, graph=g,
                   delta_prime=np.asarray(delta_prime, dtype=np.int64))


# --------------------------------------------------------------------------
# bounded-variable simplex, Bland's rule
# --------------------------------------------------------------------------


def _simplex(T, beta, basis, at_upper, cost, upper, allowed, tol=1e-9, max_pivots=1_000_000):
    """Minimise ``cost.x`` from a feasible basis; ``T = B^-1 [A | I]`` is updated in place."""
    m, ncols = T.shape
    pivots = 0
    while True:
        cb = cost[basis]
        d = cost - cb @ T
        d[basis] = 0.0
        cand = allowed & (((~at_upper) & (d < -tol)) | (at_upper & (d > tol)))
        cand[basis] = False
        js = np.flatnonzero(cand)
        if len(js) == 0:
            return "optimal", pivots
        j = int(js[0])
        direction = -1.0 if at_upper[j] else 1.0
        col = T[:, j] * direction  # basics change by -theta * col
        theta = upper[j]
        leave = -1
        leave_to_upper = False
        pos = col > tol
        neg = col < -tol
        ratios = np.full(m, np.inf)
        ratios[pos] = beta[pos] / col[pos]
        ub = upper[basis]
        with np.errstate(invalid="ignore"):
            r2 = (ub[neg] - beta[neg]) / (-col[neg])
        ratios[neg] = r2
        if np.isfinite(ratios).any():
            rmin = ratios.min()
            if rmin < theta - tol or not np.isfinite(theta):
                ties = np.flatnonzero(ratios <= rmin + tol)
                leave = int(ties[np.argmin(basis[ties])])
                theta = max(rmin, 0.0)
                leave_to_upper = bool(neg[leave])
        if not np.isfinite(theta):
            return "unbounded", pivots
        beta -= theta * col
        if leave < 0:
            at_upper[j] = not at_upper[j]
            continue
        out = basis[leave]
        entering_value = (upper[j] - theta) if at_upper[j] else theta
        at_upper[out] = leave_to_upper
        at_upper[j] = False
        piv = T[leave, j]
        T[leave] /= piv
        others = np.flatnonzero(T[:, j] != 0)
        others = others[others != leave]
        if len(others):
            T[others] -= np.outer(T[others, j], T[leave])
        beta[leave] = entering_value
        basis[leave] = j
        pivots += 1
        if pivots > max_pivots:
            raise OracleError("pivot limit exceeded")


def _solve_bland(p: DenseLP) -> LPResult:
    A, b = p.A.copy(), p.b.copy()
    m, n = A.shape
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1
    T = np.hstack([A, np.eye(m)])
    upper = np.r_[p.upper, np.full(m, np.inf)]
    basis = np.arange(n, n + m)
    at_upper = np.zeros(n + m, dtype=bool)
    beta = b.copy()
    allowed = np.ones(n + m, dtype=bool)

    phase1 = np.r_[np.zeros(n), np.ones(m)]
    _, piv1 = _simplex(T, beta, basis, at_upper, phase1, upper, allowed)
    if phase1[basis] @ beta > 1e-7:
        return LPResult("infeasible", pivots=piv1)
    # drive remaining artificials out of the basis
    for r in np.flatnonzero(basis >= n):
        nz = np.flatnonzero(np.abs(T[r, :n]) > 1e-9)
        nz = nz[~np.isin(nz, basis)]
        if len(nz):
            j = int(nz[0])
            piv = T[r, j]
            T[r] /= piv
            for i in np.flatnonzero(T[:, j] != 0):
                if i != r:
                    T[i] -= T[i, j] * T[r]
            # x_j enters at its current bound value; artificial leaves at 0
            beta[r] = p.upper[j] if at_upper[j] else 0.0
            at_upper[j] = False
            basis[r] = j
    allowed[n:] = False
    status, piv2 = _simplex(T, beta, basis, at_upper, np.r_[p.c, np.zeros(m)], upper, allowed)
    if status != "optimal":
        return LPResult(status, pivots=piv1 + piv2)
    x = np.where(at_upper[:n], p.upper, 0.0)
    real = basis < n
    x[basis[real]] = beta[real]
    return LPResult("optimal", float(p.c @ x), x, piv1 + piv2)


def _solve_highs(p: DenseLP) -> LPResult:
    from scipy.optimize import linprog

    bounds = [(0.0, None if not np.isfinite(u) else float(u)) for u in p.upper]
    res = linprog(p.c, A_eq=p.A, b_eq=p.b, bounds=bounds, method="highs-ds")
    if res.status == 2:
        return LPResult("infeasible")
    if res.status == 3:
        return LPResult("unbounded")
    if res.status != 0:
        raise OracleError(res.message)
    return LPResult("optimal", float(res.fun), np.asarray(res.x), int(getattr(res, "nit", 0)))


def solve_graph_lp(g: UnwrapGraph, delta_prime, costs=None, capacity: int = 1) -> LPResult:
    """Cycle-constraint LP of ``g`` solved by HiGHS on the sparse matrix.

    Same model as ``solve_lp_exact(lp_from_graph(...), method="highs")`` but
    without a dense copy of the constraints, for graphs beyond desk scale.
    The integrality check and rounding are applied as in :func:`solve_lp_exact`.
    """
    from scipy.optimize import linprog

    cs = build_constraints(g, build_cycle_basis(g), delta_prime)
    c = g.arc_costs if costs is None else np.asarray(costs, dtype=float)
    c = np.stack([c, c], axis=1).reshape(-1) if c.ndim == 1 else c.reshape(-1)
    res = linprog(c, A_eq=cs.matrix.astype(float), b_eq=cs.rhs.astype(float),
                  bounds=(0.0, float(capacity)), method="highs-ds")
    if res.status == 2:
        return LPResult("infeasible")
    if res.status == 3:
        return LPResult("unbounded")
    if res.status != 0:
        raise OracleError(res.message)
    xr = np.rint(res.x)
    if np.max(np.abs(res.x - xr), initial=0.0) > INTEGRALITY_TOL:
        raise OracleError("LP vertex is not integral; constraint matrix is not totally unimodular")
    return LPResult("optimal", float(c @ xr), xr, int(getattr(res, "nit", 0)))


def solve_lp_exact(p: DenseLP, method: str = "bland", check_integral: bool = True) -> LPResult:
    """Vertex optimum of the LP relaxation, rounded to integers.

    ``method="highs"`` uses SciPy's dual simplex as the engine for instances
    too large for the dense tableau. The vertex must be integral within
    ``1e-7`` (total unimodularity); otherwise :class:`OracleError` is raised.
    """
    if method == "bland":
        res = _solve_bland(p)
    elif method == "highs":
        res = _solve_highs(p)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    if res.status == "optimal" and check_integral:
        xr = np.rint(res.x)
        if np.max(np.abs(res.x - xr), initial=0.0) > INTEGRALITY_TOL:
            raise OracleError("LP vertex is not integral; constraint matrix is not totally unimodular")
        res.x = xr
        res.objective = float(p.c @ xr)
    return res


# --------------------------------------------------------------------------
# integer enumeration
# --------------------------------------------------------------------------


def _half_table(A, c, cols):
    k = len(cols)
    idx = np.arange(1 << k, dtype=np.int64)
    X = ((idx[:, None] >> np.arange(k)) & 1).astype(np.int64)
    return X, X @ A[:, cols].T, X @ c[cols]


def solve_brute_force(p: DenseLP) -> LPResult:
    """Exhaustive minimum over ``{0, 1}^n``; refuses more than 24 variables.

    Every binary vector is covered: each half of the variables is enumerated
    separately and halves are joined on equal partial constraint sums.
    """
    n = p.n_vars
    if n > BRUTE_FORCE_LIMIT:
        raise OracleError(f"{n} variables exceed the brute-force limit of {BRUTE_FORCE_LIMIT}")
    if np.any(p.upper < 1):
        raise OracleError("brute force assumes binary variables (upper bound >= 1)")
    A = np.rint(p.A).astype(np.int64)
    b = np.rint(p.b).astype(np.int64)
    lo, hi = np.arange(n // 2), np.arange(n // 2, n)
    X1, S1, C1 = _half_table(A, p.c, lo)
    X2, S2, C2 = _half_table(A, p.c, hi)
    best1 = {}
    for i, key in enumerate(map(bytes, S1)):
        if key not in best1 or C1[i] < C1[best1[key]]:
            best1[key] = i
    best, arg = np.inf, None
    need = b[None, :] - S2
    for j, key in enumerate(map(bytes, need)):
        i = best1.get(key)
        if i is not None and C1[i] + C2[j] < best:
            best, arg = float(C1[i] + C2[j]), (i, j)
    if arg is None:
        return LPResult("infeasible")
    x = np.empty(n)
    x[lo], x[hi] = X1[arg[0]], X2[arg[1]]
    return LPResult("optimal", float(p.c @ x), x)


def _edge_cost_table(cf: float, cb: float, u: int):
    """Cheapest ``(d_f, d_b)`` with ``d_f - d_b = x`` for ``x`` in ``-u..u``."""
    table = {}
    for x in range(-u, u + 1):
        best = None
        for df in range(max(x, 0), u + 1):
            db = df - x
            if 0 <= db <= u:
                val = cf * df + cb * db
                if best is None or val < best[0]:
                    best = (val, df, db)
        table[x] = best
    return table


def solve_potential_enumeration(g: UnwrapGraph, delta_prime, costs, capacity: int = 1) -> LPResult:
    """Exact integer optimum by depth-first enumeration of cycle counts.

    Any integer arc flow satisfying every cycle constraint is
    ``x_ij = d'_ij - (n_j - n_i)`` for integer counts ``n`` with ``n_0 = 0``.
    Counts are assigned in BFS order; each vertex gets the values compatible
    with its assigned neighbours (``|x| <= capacity``) and branches are cut
    when the partial cost plus the cheapest completion reaches the incumbent.
    """
    dp = np.asarray(delta_prime, dtype=np.int64)
    c = np.asarray(costs, dtype=float)
    c = np.stack([c, c], axis=1) if c.ndim == 1 else c.reshape(-1, 2)
    u = int(capacity)
    tables = [_edge_cost_table(c[e, 0], c[e, 1], u) for e in range(g.n_edges)]
    floor = np.array([min(v[0] for v in t.values()) for t in tables])
    basis = build_cycle_basis(g)
    order = [int(v) for v in basis.order]
    rank = np.empty(g.n_vertices, dtype=np.int64)
    rank[order] = np.arange(len(order))
    # edges closing at each vertex (other endpoint earlier in the order)
    closing = [[] for _ in range(g.n_vertices)]
    for e, (a, b) in enumerate(g.edges):
        later, earlier = (a, b) if rank[a] > rank[b] else (b, a)
        closing[later].append((e, int(earlier), later == b))
    rest = np.zeros(len(order) + 1)
    for k in range(len(order) - 1, -1, -1):
        rest[k] = rest[k + 1] + sum(floor[e] for e, _, _ in closing[order[k]])

    n = np.zeros(g.n_vertices, dtype=np.int64)
    best = [np.inf, None]

    def edge_x(e, later_is_head, n_later, n_earlier):
        # x = d' - (n_head - n_tail)
        if later_is_head:
            return dp[e] - (n_later - n_earlier)
        return dp[e] - (n_earlier - n_later)

    def candidates(v):
        cl = closing[v]
        if not cl:
            return [0]
        e, w, is_head = cl[0]
        # values of n_v keeping |x_e| <= u on the first closing edge
        base = n[w] + dp[e] if is_head else n[w] - dp[e]
        vals = []
        for val in range(base - u, base + u + 1):
            if all(abs(edge_x(e2, h2, val, n[w2])) <= u for e2, w2, h2 in cl):
                vals.append(val)
        return vals

    def dfs(k, cost):
        if cost + rest[k] >= best[0] - 1e-12:
            return
        if k == len(order):
            best[0], best[1] = cost, n.copy()
            return
        v = order[k]
        opts = []
        for val in candidates(v):
            add = sum(tables[e][edge_x(e, h, val, n[w])][0] for e, w, h in closing[v])
            opts.append((add, val))
        opts.sort()
        for add, val in opts:
            n[v] = val
            dfs(k + 1, cost + add)
        n[v] = 0

    import sys

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * g.n_vertices + 100))
    try:
        dfs(1, 0.0)
    finally:
        sys.setrecursionlimit(limit)
    if best[1] is None:
        return LPResult("infeasible")
    nn = best[1]
    x = dp - (nn[g.edges[:, 1]] - nn[g.edges[:, 0]])
    arcs = np.array([tables[e][int(x[e])][1:] for e in range(g.n_edges)], dtype=float).reshape(-1)
    return LPResult("optimal", float(best[0]), arcs)


def integer_optimum(p: DenseLP) -> LPResult:
    """Exhaustive integer optimum: binary brute force when small, else potential enumeration."""
    if p.n_vars <= BRUTE_FORCE_LIMIT:
        return solve_brute_force(p)
    if p.graph is None:
        raise OracleError("instance too large for brute force and has no graph structure")
    u = int(p.upper.max())
    return solve_potential_enumeration(p.graph, p.delta_prime, p.c.reshape(-1, 2), u)


def verify_tight_relaxation(p: DenseLP, method: str = "bland") -> bool:
    """True iff the LP vertex optimum equals the exhaustive integer optimum."""
    lp = solve_lp_exact(p, method=method, check_integral=False)
    ip = integer_optimum(p)
    if lp.status != "optimal" or ip.status != "optimal":
        return lp.status == ip.status
    scale = max(1.0, abs(ip.objective))
    return abs(lp.objective - ip.objective) <= INTEGRALITY_TOL * scale
