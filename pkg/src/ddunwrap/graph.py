"""Unwrapping graphs over pixel grids, fundamental cycle bases and cycle constraints.

Vertices are row-major pixel ids. Every undirected edge ``(i, j)`` is stored once
with ``i < j`` and carries two directed arc slots: the forward arc ``i -> j``
(variable column ``2 * e``) and the backward arc ``j -> i`` (column ``2 * e + 1``).
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree


class InvalidDimensionError(ValueError):
    pass


class ConnectivityError(ValueError):
    pass


# (dr, dc) offsets with dr > 0 or (dr == 0 and dc > 0), one entry per edge kind.
EDGE_KINDS = {
    "h": (0, 1),
    "v": (1, 0),
    "diag": (1, 1),  # "\" : (r, c) - (r+1, c+1)
    "anti": (1, -1),  # "/" : (r, c) - (r+1, c-1)
    "h2": (0, 2),
    "v2": (2, 0),
}

LEVEL_KINDS = {
    0: ("h", "v"),
    1: ("h", "v", "diag", "anti"),
    2: ("h", "v", "diag", "anti", "h2", "v2"),
}


@dataclass(frozen=True, eq=False)
class UnwrapGraph:
    """Undirected graph whose edges each carry a pair of directed flow arcs.

    Attributes
    ----------
    n_vertices : int
    edges : ndarray, shape (E, 2)
        Canonical vertex pairs with ``edges[:, 0] < edges[:, 1]``.
    arc_costs : ndarray, shape (E,)
        Nonnegative per-edge cost shared by both arcs of the edge.
    rows, cols : int or None
        Grid shape for pixel graphs; ``None`` for abstract graphs such as K5.
    arc_level : int or None
        Redundant-arc level the grid was built with.
    kinds : tuple of str
        Edge family label per edge (``"h"``, ``"diag"``, ...); ``"k"`` for
        abstract graphs.
    coords : ndarray, shape (V, 2)
        Drawing coordinates ``(x, y)``, used for debugging and embeddings.
    """

    n_vertices: int
    edges: np.ndarray
    arc_costs: np.ndarray
    rows: Optional[int] = None
    cols: Optional[int] = None
    arc_level: Optional[int] = None
    kinds: tuple = ()
    coords: Optional[np.ndarray] = None
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if np.any(edges[:, 0] >= edges[:, 1]):
            raise ValueError("edges must be canonical (i < j); self-loops are not allowed")
        if np.any(edges < 0) or np.any(edges >= self.n_vertices):
            raise ValueError("edge endpoint out of range")
        keys = edges[:, 0] * self.n_vertices + edges[:, 1]
        if len(np.unique(keys)) != len(keys):
            raise ValueError("duplicate edges")
        costs = np.asarray(self.arc_costs, dtype=float)
        if costs.shape != (len(edges),):
            raise ValueError("arc_costs must have one entry per edge")
        if np.any(costs < 0):
            raise ValueError("arc costs must be nonnegative")
        edges.setflags(write=False)
        costs = costs.copy()
        costs.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "arc_costs", costs)
        if not self.kinds:
            object.__setattr__(self, "kinds", ("k",) * len(edges))
        self._index.update({(int(i), int(j)): e for e, (i, j) in enumerate(edges)})

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def cyclomatic_number(self) -> int:
        return self.n_edges - self.n_vertices + 1

    def edge_index(self, i: int, j: int) -> int:
        """Index of the undirected edge ``{i, j}``; raises ``KeyError`` if absent."""
        if i > j:
            i, j = j, i
        return self._index[(i, j)]

    def with_costs(self, costs) -> "UnwrapGraph":
        return UnwrapGraph(
            self.n_vertices, self.edges, costs, self.rows, self.cols,
            self.arc_level, self.kinds, self.coords,
        )

    def subgraph(self, edge_ids) -> "UnwrapGraph":
        """Spanning subgraph on the same vertex set with the given edges."""
        edge_ids = np.asarray(edge_ids, dtype=np.int64)
        return UnwrapGraph(
            self.n_vertices, self.edges[edge_ids], self.arc_costs[edge_ids],
            self.rows, self.cols, self.arc_level,
            tuple(self.kinds[e] for e in edge_ids), self.coords,
        )

    def adjacency(self) -> sp.csr_matrix:
        n = self.n_vertices
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(i))
        return sp.csr_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(n, n))

    def is_connected(self) -> bool:
        if self.n_vertices <= 1:
            return True
        ncomp, _ = connected_components(self.adjacency(), directed=False)
        return ncomp == 1

    def pixel(self, v: int) -> tuple[int, int]:
        return divmod(int(v), self.cols)


def grid_edge_count(rows: int, cols: int, arc_level: int) -> int:
    """Closed-form edge count of the grid template."""
    count = rows * (cols - 1) + cols * (rows - 1)
    if arc_level >= 1:
        count += 2 * (rows - 1) * (cols - 1)
    if arc_level >= 2:
        count += rows * max(cols - 2, 0) + cols * max(rows - 2, 0)
    return count


def build_grid_graph(rows: int, cols: int, arc_level: int = 0, costs=None) -> UnwrapGraph:
    """Pixel grid with redundant arcs.

    ``arc_level`` 0 is the 4-neighbour grid, 1 adds both diagonals of every unit
    cell, 2 additionally adds horizontal and vertical arcs of length two.
    """
    if rows < 2 or cols < 2:
        raise InvalidDimensionError(f"grid must be at least 2x2, got {rows}x{cols}")
    if arc_level not in LEVEL_KINDS:
        raise ValueError(f"unsupported arc level {arc_level!r}; expected 0, 1 or 2")
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    rr, cc = rr.ravel(), cc.ravel()
    pairs, kinds = [], []
    for kind in LEVEL_KINDS[arc_level]:
        dr, dc = EDGE_KINDS[kind]
        r2, c2 = rr + dr, cc + dc
        ok = (r2 < rows) & (c2 >= 0) & (c2 < cols)
        a = rr[ok] * cols + cc[ok]
        b = r2[ok] * cols + c2[ok]
        pairs.append(np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1))
        kinds.extend([kind] * int(ok.sum()))
    edges = np.concatenate(pairs)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = edges[order]
    kinds = tuple(kinds[k] for k in order)
    coords = np.stack([np.arange(rows * cols) % cols, -(np.arange(rows * cols) // cols)], axis=1).astype(float)
    if costs is None:
        costs = np.ones(len(edges))
    return UnwrapGraph(rows * cols, edges, costs, rows, cols, arc_level, kinds, coords)


def complete_graph(n: int = 5, costs=None) -> UnwrapGraph:
    edges = np.array(list(itertools.combinations(range(n), 2)), dtype=np.int64)
    angle = np.pi / 2 + 2 * np.pi * np.arange(n) / n
    coords = np.stack([np.cos(angle), np.sin(angle)], axis=1)
    if costs is None:
        costs = np.ones(len(edges))
    return UnwrapGraph(n, edges, costs, coords=coords)


# --------------------------------------------------------------------------
# spanning trees and fundamental cycles
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CycleBasis:
    """Spanning tree plus one fundamental cycle per back edge.

    Each cycle starts at the tail ``i`` of its back edge ``(i, j)``, follows the
    tree path to ``j`` and closes through the back edge ``j -> i``. ``cycle_edges[k]``
    and ``cycle_signs[k]`` give the traversed edges with ``+1`` for the canonical
    direction; ``cycle_vertices[k]`` lists the visited vertices (closed walk
    without the repeated start).
    """

    n_vertices: int
    root: int
    tree_edges: np.ndarray
    back_edges: np.ndarray
    parent: np.ndarray
    parent_edge: np.ndarray
    order: np.ndarray
    depth: np.ndarray
    cycle_edges: list
    cycle_signs: list
    cycle_vertices: list

    @property
    def n_cycles(self) -> int:
        return len(self.cycle_edges)

    def edge_matrix(self, n_edges: int) -> sp.csr_matrix:
        """Signed cycle-edge incidence, shape ``(n_cycles, n_edges)``."""
        if not self.cycle_edges:
            return sp.csr_matrix((0, n_edges), dtype=np.int64)
        rows = np.concatenate([np.full(len(c), k) for k, c in enumerate(self.cycle_edges)])
        cols = np.concatenate(self.cycle_edges)
        vals = np.concatenate(self.cycle_signs)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_cycles, n_edges), dtype=np.int64)


def _tree_parents(g: UnwrapGraph, tree_rule, root: int):
    """Return ``(parent, parent_edge)`` arrays of a spanning tree rooted at ``root``."""
    n = g.n_vertices
    rule, seed = (tree_rule, 0) if isinstance(tree_rule, str) else tree_rule
    nbrs = [[] for _ in range(n)]
    if rule == "random":
        rng = np.random.default_rng(seed)
        w = rng.random(g.n_edges) + 1.0
        m = sp.csr_matrix((w, (g.edges[:, 0], g.edges[:, 1])), shape=(n, n))
        t = minimum_spanning_tree(m).tocoo()
        keep = {g.edge_index(int(a), int(b)) for a, b in zip(t.row, t.col)}
        edge_ids = sorted(keep)
        rule = "bfs"
    else:
        edge_ids = range(g.n_edges)
    for e in edge_ids:
        a, b = g.edges[e]
        nbrs[a].append((int(b), e))
        nbrs[b].append((int(a), e))
    parent = np.full(n, -1, dtype=np.int64)
    parent_edge = np.full(n, -1, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    seen[root] = True
    if rule == "bfs":
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v, e in nbrs[u]:
                if not seen[v]:
                    seen[v] = True
                    parent[v], parent_edge[v] = u, e
                    queue.append(v)
    elif rule == "dfs":
        stack = [(root, iter(nbrs[root]))]
        while stack:
            u, it = stack[-1]
            for v, e in it:
                if not seen[v]:
                    seen[v] = True
                    parent[v], parent_edge[v] = u, e
                    stack.append((v, iter(nbrs[v])))
                    break
            else:
                stack.pop()
    else:
        raise ValueError(f"unknown tree rule {tree_rule!r}")
    if not seen.all():
        raise ConnectivityError(f"graph is disconnected: {int((~seen).sum())} vertices unreachable from {root}")
    return parent, parent_edge


def build_cycle_basis(g: UnwrapGraph, tree_rule="bfs", root: int = 0, cycles: bool = True) -> CycleBasis:
    """Fundamental cycle basis of ``g`` relative to a spanning tree.

    Parameters
    ----------
    tree_rule : {"bfs", "dfs", "random"} or (rule, seed)
        Spanning tree strategy. ``("random", seed)`` draws a random spanning
        tree (minimum spanning tree under random weights).
    cycles : bool
        When false only the tree is built and the cycle lists stay empty.
    """
    n = g.n_vertices
    if n > 1 and not g.is_connected():
        raise ConnectivityError("graph is disconnected")
    parent, parent_edge = _tree_parents(g, tree_rule, root)

    # depth and a root-first vertex order
    children = [[] for _ in range(n)]
    for v in range(n):
        if parent[v] >= 0:
            children[parent[v]].append(v)
    depth = np.zeros(n, dtype=np.int64)
    order = [root]
    for u in order:
        for v in children[u]:
            depth[v] = depth[u] + 1
            order.append(v)

    in_tree = np.zeros(g.n_edges, dtype=bool)
    in_tree[parent_edge[parent_edge >= 0]] = True
    back = np.flatnonzero(~in_tree)

    cyc_e, cyc_s, cyc_v = [], [], []
    for e in (back if cycles else ()):
        i, j = (int(x) for x in g.edges[e])
        # tree path i -> lca -> j
        up_i, up_j = [i], [j]
        a, b = i, j
        while depth[a] > depth[b]:
            a = int(parent[a]); up_i.append(a)
        while depth[b] > depth[a]:
            b = int(parent[b]); up_j.append(b)
        while a != b:
            a = int(parent[a]); up_i.append(a)
            b = int(parent[b]); up_j.append(b)
        verts = up_i + up_j[-2::-1]  # i ... lca ... j
        edges_, signs = [], []
        for u, v in zip(verts[:-1], verts[1:]):
            pe = parent_edge[u] if parent[u] == v else parent_edge[v]
            edges_.append(int(pe))
            signs.append(1 if g.edges[pe, 0] == u else -1)
        edges_.append(int(e))
        signs.append(-1)  # back edge traversed j -> i
        cyc_e.append(np.array(edges_, dtype=np.int64))
        cyc_s.append(np.array(signs, dtype=np.int64))
        cyc_v.append(np.array(verts, dtype=np.int64))

    return CycleBasis(
        n_vertices=n, root=root,
        tree_edges=np.sort(parent_edge[parent_edge >= 0]), back_edges=back,
        parent=parent, parent_edge=parent_edge,
        order=np.array(order, dtype=np.int64), depth=depth,
        cycle_edges=cyc_e, cycle_signs=cyc_s, cycle_vertices=cyc_v,
    )


def walk_cycle(g: UnwrapGraph, edges: Sequence[int], signs: Sequence[int], start: int) -> bool:
    """Follow signed edges from ``start``; True if the walk is connected and closed."""
    u = start
    for e, s in zip(edges, signs):
        a, b = g.edges[e]
        tail, head = (a, b) if s > 0 else (b, a)
        if tail != u:
            return False
        u = head
    return u == start


# --------------------------------------------------------------------------
# cycle constraints
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConstraintSpace:
    """Cycle constraints ``sum_C (d_ij - d_ji) = sum_C d'_ij`` over the arc variables.

    ``matrix`` has shape ``(n_cycles, 2 * E)`` with entries in {-1, 0, 1};
    ``edge_matrix`` is the signed cycle-edge incidence it is derived from.
    """

    matrix: sp.csr_matrix
    edge_matrix: sp.csr_matrix
    rhs: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def residual(self, arc_flows) -> np.ndarray:
        """``A @ delta - rhs`` for arc flows given as ``(E, 2)`` or flat ``(2E,)``."""
        x = np.asarray(arc_flows).reshape(-1)
        return self.matrix @ x - self.rhs


def arc_matrix(edge_matrix: sp.spmatrix) -> sp.csr_matrix:
    """Expand a signed cycle-edge matrix to forward/backward arc columns."""
    m = sp.coo_matrix(edge_matrix)
    rows = np.r_[m.row, m.row]
    cols = np.r_[2 * m.col, 2 * m.col + 1]
    vals = np.r_[m.data, -m.data]
    return sp.csr_matrix((vals, (rows, cols)), shape=(m.shape[0], 2 * m.shape[1]), dtype=np.int64)


def build_constraints(g: UnwrapGraph, basis: CycleBasis, wrapped_gradients) -> ConstraintSpace:
    """Cycle constraint rows and integer right-hand sides for per-edge ``d'``."""
    dprime = np.asarray(wrapped_gradients)
    if dprime.shape != (g.n_edges,):
        raise ValueError("one wrapped gradient per edge is required")
    if not np.all(np.equal(np.round(dprime), dprime)):
        raise ValueError("wrapped gradients must be integers")
    em = basis.edge_matrix(g.n_edges)
    rhs = np.asarray(em @ dprime.astype(np.int64), dtype=np.int64)
    return ConstraintSpace(matrix=arc_matrix(em), edge_matrix=em, rhs=rhs)


# --------------------------------------------------------------------------
# total unimodularity
# --------------------------------------------------------------------------


@dataclass
class TUReport:
    ok: bool
    examined: dict  # order -> number of determinants evaluated
    reduced: dict  # order -> subsets skipped by exact reductions
    violation: Optional[np.ndarray] = None
    violation_rows: Optional[tuple] = None
    violation_cols: Optional[tuple] = None


def _dets(stack: np.ndarray) -> np.ndarray:
    if stack.shape[-1] == 1:
        return stack[:, 0, 0].astype(float)
    return np.linalg.det(stack.astype(float))


def _unique_columns_up_to_sign(sub: np.ndarray) -> np.ndarray:
    """Indices of columns of ``sub`` that are nonzero and distinct up to sign."""
    keep, seen = [], set()
    for j in range(sub.shape[1]):
        col = sub[:, j]
        nz = np.flatnonzero(col)
        if len(nz) == 0:
            continue
        canon = col * (1 if col[nz[0]] > 0 else -1)
        key = canon.tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(j)
    return np.array(keep, dtype=np.int64)


def check_total_unimodularity(
    cs, max_order: int = 4,
    samples: int = 10_000, sample_orders: Sequence[int] = (5, 6), seed: int = 0,
) -> TUReport:
    """Check square-submatrix determinants of a cycle constraint matrix.

    Orders up to ``max_order`` are enumerated
    exhaustively on the signed edge matrix. The arc matrix is TU iff the edge
    matrix is, since the two arc columns of an edge are negatives of each
    other. Enumeration skips, exactly, submatrices whose determinant is already
    determined by lower orders: a zero row or column, a column with a single
    nonzero (Laplace expansion), and repeated columns up to sign (det 0).
    ``samples`` random submatrices of each order in ``sample_orders`` are drawn
    with columns taken from the support of the chosen rows.
    """
    if isinstance(cs, ConstraintSpace):
        dense = cs.edge_matrix.toarray()
    elif sp.issparse(cs):
        dense = cs.toarray()
    else:
        dense = np.asarray(cs)
    dense = dense.astype(np.int64)
    if not np.all(np.isin(dense, (-1, 0, 1))):
        bad = np.argwhere(~np.isin(dense, (-1, 0, 1)))[0]
        return TUReport(False, {1: 1}, {}, dense[bad[0]:bad[0] + 1, bad[1]:bad[1] + 1],
                        (int(bad[0]),), (int(bad[1]),))
    m, n = dense.shape
    examined, reduced = {}, {}
    top = min(max_order, m, n)

    for k in range(1, top + 1):
        examined[k] = 0
        reduced[k] = 0
        for rows in itertools.combinations(range(m), k):
            sub = dense[list(rows)]
            # columns with >= 2 nonzeros inside these rows, deduplicated up to sign
            cand = np.flatnonzero((sub != 0).sum(axis=0) >= (2 if k > 1 else 1))
            if len(cand) < k:
                reduced[k] += 1
                continue
            cand = cand[_unique_columns_up_to_sign(sub[:, cand])]
            if len(cand) < k:
                reduced[k] += 1
                continue
            combos = np.array(list(itertools.combinations(cand, k)), dtype=np.int64)
            if combos.size == 0:
                continue
            for start in range(0, len(combos), 50_000):
                chunk = combos[start:start + 50_000]
                stack = np.transpose(sub[:, chunk], (1, 0, 2))
                d = np.rint(_dets(stack))
                examined[k] += len(chunk)
                bad = np.flatnonzero(np.abs(d) > 1)
                if len(bad):
                    cols = tuple(int(c) for c in chunk[bad[0]])
                    return TUReport(False, examined, reduced, dense[np.ix_(rows, cols)], rows, cols)

    rng = np.random.default_rng(seed)
    for k in sample_orders:
        if k > min(m, n):
            continue
        mats, picks = [], []
        tries = 0
        while len(mats) < samples and tries < 20 * samples:
            tries += 1
            rows = np.sort(rng.choice(m, size=k, replace=False))
            support = np.flatnonzero(np.any(dense[rows] != 0, axis=0))
            if len(support) < k:
                continue
            cols = np.sort(rng.choice(support, size=k, replace=False))
            mats.append(dense[np.ix_(rows, cols)])
            picks.append((tuple(int(r) for r in rows), tuple(int(c) for c in cols)))
        if not mats:
            continue
        d = np.rint(_dets(np.array(mats)))
        examined[k] = examined.get(k, 0) + len(mats)
        bad = np.flatnonzero(np.abs(d) > 1)
        if len(bad):
            r, c = picks[bad[0]]
            return TUReport(False, examined, reduced, mats[bad[0]], r, c)
    return TUReport(True, examined, reduced)
