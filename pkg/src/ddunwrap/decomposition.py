"""Planar decompositions of unwrapping graphs.

Every subgraph comes with explicit drawing coordinates that form a planar
straight-line embedding, so faces are traced from the rotation system instead
of running a planarity test.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .graph import UnwrapGraph, complete_graph


class UnsupportedDecompositionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FaceList:
    """Faces of an embedded subgraph.

    ``left[e]`` is the face to the left of the forward half-edge ``i -> j`` of
    local edge ``e``; ``right[e]`` the face to the left of ``j -> i``. Both are
    equal for bridges. Faces are traced with the face on the left, so inner
    faces run counter-clockwise and the outer face clockwise.
    """

    n_faces: int
    left: np.ndarray
    right: np.ndarray
    outer: int
    boundaries: list  # per face: list of (local edge, +1/-1) half-edges

    def euler_ok(self, n_vertices: int) -> bool:
        return n_vertices - len(self.left) + self.n_faces == 2


def trace_faces(n_vertices: int, edges: np.ndarray, coords: np.ndarray) -> FaceList:
    """Trace faces of a connected straight-line planar drawing.

    At each vertex the outgoing half-edges are sorted by angle; a face walk
    arriving along ``u -> v`` continues with the first half-edge clockwise from
    ``v -> u``.
    """
    edges = np.asarray(edges, dtype=np.int64)
    m = len(edges)
    # half-edge h = 2e (i->j) or 2e+1 (j->i)
    tail = np.empty(2 * m, dtype=np.int64)
    head = np.empty(2 * m, dtype=np.int64)
    tail[0::2], head[0::2] = edges[:, 0], edges[:, 1]
    tail[1::2], head[1::2] = edges[:, 1], edges[:, 0]
    d = coords[head] - coords[tail]
    angle = np.arctan2(d[:, 1], d[:, 0])
    order = np.lexsort((angle, tail))
    start = np.searchsorted(tail[order], np.arange(n_vertices + 1))
    pos = np.empty(2 * m, dtype=np.int64)
    pos[order] = np.arange(2 * m)
    # clockwise neighbour of half-edge h around its tail
    cw = np.empty(2 * m, dtype=np.int64)
    for h in range(2 * m):
        v = tail[h]
        lo, hi = start[v], start[v + 1]
        p = pos[h] - 1
        if p < lo:
            p = hi - 1
        cw[h] = order[p]

    face_of = np.full(2 * m, -1, dtype=np.int64)
    boundaries = []
    for h0 in range(2 * m):
        if face_of[h0] >= 0:
            continue
        f = len(boundaries)
        walk = []
        h = h0
        while face_of[h] < 0:
            face_of[h] = f
            walk.append((h >> 1, 1 if h % 2 == 0 else -1))
            h = cw[h ^ 1]
        if h != h0:
            raise ValueError("inconsistent rotation system; drawing is not planar")
        boundaries.append(walk)

    area = np.zeros(len(boundaries))
    for f, walk in enumerate(boundaries):
        for e, s in walk:
            a, b = (edges[e, 0], edges[e, 1]) if s > 0 else (edges[e, 1], edges[e, 0])
            area[f] += coords[a, 0] * coords[b, 1] - coords[b, 0] * coords[a, 1]
    outer = int(np.argmin(area))
    return FaceList(
        n_faces=len(boundaries), left=face_of[0::2].copy(), right=face_of[1::2].copy(),
        outer=outer, boundaries=boundaries,
    )


@dataclass(frozen=True, eq=False)
class Subgraph:
    index: int
    label: str
    edge_ids: np.ndarray  # indices into the parent graph's edge list
    coords: np.ndarray  # planar drawing used for face tracing
    faces: FaceList
    graph: UnwrapGraph  # spanning subgraph (local edge order == edge_ids order)


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Covering family of planar spanning subgraphs.

    ``membership`` is a boolean ``(E, K)`` matrix; row ``e`` marks the subgraphs
    containing edge ``e``.
    """

    graph: UnwrapGraph
    subgraphs: tuple
    membership: np.ndarray
    _local: list = field(default_factory=list, repr=False)

    @property
    def n_subgraphs(self) -> int:
        return len(self.subgraphs)

    def edge_membership(self, e: int) -> tuple:
        return tuple(int(k) for k in np.flatnonzero(self.membership[e]))

    def covers(self) -> bool:
        return bool(self.membership.any(axis=1).all())

    def multiplicity(self) -> np.ndarray:
        return self.membership.sum(axis=1)


def make_decomposition(g: UnwrapGraph, parts: Sequence[tuple]) -> Decomposition:
    """Build a decomposition from ``(label, edge_ids, coords)`` triples."""
    subs = []
    member = np.zeros((g.n_edges, len(parts)), dtype=bool)
    for k, (label, edge_ids, coords) in enumerate(parts):
        edge_ids = np.unique(np.asarray(edge_ids, dtype=np.int64))
        sub = g.subgraph(edge_ids)
        if not sub.is_connected():
            raise UnsupportedDecompositionError(f"subgraph {label!r} is not spanning-connected")
        faces = trace_faces(g.n_vertices, sub.edges, np.asarray(coords, dtype=float))
        if not faces.euler_ok(g.n_vertices):
            raise UnsupportedDecompositionError(f"subgraph {label!r}: embedding violates Euler's formula")
        subs.append(Subgraph(k, label, edge_ids, np.asarray(coords, dtype=float), faces, sub))
        member[edge_ids, k] = True
    d = Decomposition(g, tuple(subs), member)
    if not d.covers():
        missing = np.flatnonzero(~member.any(axis=1))
        raise UnsupportedDecompositionError(f"decomposition misses {len(missing)} edges, e.g. {g.edges[missing[0]]}")
    return d


def _grid_coords(rows: int, cols: int) -> np.ndarray:
    v = np.arange(rows * cols)
    return np.stack([v % cols, -(v // cols)], axis=1).astype(float)


def _strip_coords(rows: int, cols: int, transpose: bool = False) -> np.ndarray:
    """Zigzag drawing in which each row (or column) with its length-2 arcs is a triangle strip."""
    v = np.arange(rows * cols)
    r, c = v // cols, v % cols
    if not transpose:
        return np.stack([c, -(3.0 * r) + (c % 2)], axis=1).astype(float)
    return np.stack([3.0 * c + (r % 2), -r], axis=1).astype(float)


def build_decomposition(g: UnwrapGraph, arc_level: Optional[int] = None) -> Decomposition:
    """Predefined planar decomposition of a redundant-arc grid.

    Subgraph 0 is the 4-neighbour grid. The remaining subgraphs each hold a
    comb spanning tree of grid edges (all horizontal edges plus the first
    column, or the transpose) and one family of redundant arcs: ``\\``
    diagonals, ``/`` diagonals and, for level 2, horizontal and vertical
    length-2 arcs.
    """
    r = g.arc_level if arc_level is None else arc_level
    if r not in (1, 2):
        raise UnsupportedDecompositionError(f"templates exist for arc levels 1 and 2, got {r!r}")
    if g.rows is None or g.arc_level != r:
        raise UnsupportedDecompositionError("graph was not built by build_grid_graph with this arc level")
    rows, cols = g.rows, g.cols
    kinds = np.array(g.kinds)
    e = g.edges
    grid = np.flatnonzero((kinds == "h") | (kinds == "v"))
    comb_h = np.flatnonzero((kinds == "h") | ((kinds == "v") & (e[:, 0] % cols == 0)))
    comb_v = np.flatnonzero((kinds == "v") | ((kinds == "h") & (e[:, 0] < cols)))
    flat = _grid_coords(rows, cols)
    parts = [
        ("grid", grid, flat),
        ("comb+diag", np.r_[comb_h, np.flatnonzero(kinds == "diag")], flat),
        ("comb+anti", np.r_[comb_h, np.flatnonzero(kinds == "anti")], flat),
    ]
    if r == 2:
        parts.append(("comb+h2", np.r_[comb_h, np.flatnonzero(kinds == "h2")], _strip_coords(rows, cols)))
        parts.append(("comb+v2", np.r_[comb_v, np.flatnonzero(kinds == "v2")], _strip_coords(rows, cols, True)))
    return make_decomposition(g, parts)


def single_decomposition(g: UnwrapGraph) -> Decomposition:
    """The whole graph as one subgraph; requires a planar drawing in ``g.coords``."""
    return make_decomposition(g, [("whole", np.arange(g.n_edges), g.coords)])


def k5_decomposition(costs=None) -> Decomposition:
    """K5 split into three planar subgraphs sharing the star tree at vertex 0.

    Each subgraph holds the star plus two disjoint non-tree edges, drawn with
    vertex 0 at the centre and the other four on a square ordered so that both
    extra edges are square sides.
    """
    g = complete_graph(5, costs)
    square = [(1, 1), (-1, 1), (-1, -1), (1, -1)]

    def coords(ring):
        c = np.zeros((5, 2))
        for v, p in zip(ring, square):
            c[v] = p
        return c

    star = [g.edge_index(0, v) for v in range(1, 5)]
    plan = [((1, 2), (3, 4), (1, 2, 3, 4)), ((1, 3), (2, 4), (1, 3, 2, 4)), ((1, 4), (2, 3), (1, 4, 2, 3))]
    parts = []
    for k, (a, b, ring) in enumerate(plan):
        ids = star + [g.edge_index(*a), g.edge_index(*b)]
        parts.append((f"G{k + 1}", ids, coords(ring)))
    return make_decomposition(g, parts)


# --------------------------------------------------------------------------
# coverage condition
# --------------------------------------------------------------------------


def gf2_rank(vectors: Sequence[int]) -> int:
    """Rank over GF(2) of bit vectors given as Python ints."""
    pivots: dict[int, int] = {}
    rank = 0
    for v in vectors:
        while v:
            top = v.bit_length() - 1
            if top in pivots:
                v ^= pivots[top]
            else:
                pivots[top] = v
                rank += 1
                break
    return rank


def cycle_space_vectors(n_vertices: int, edges: np.ndarray, edge_ids) -> list:
    """GF(2) vectors (Python ints over global edge ids) of a fundamental cycle basis.

    Works on any edge subset, connected or not: a breadth-first spanning forest
    is grown and each non-forest edge contributes the XOR of the two root paths
    plus itself.
    """
    edge_ids = np.asarray(edge_ids, dtype=np.int64)
    adj = [[] for _ in range(n_vertices)]
    for e in edge_ids:
        i, j = edges[e]
        adj[i].append((int(j), int(e)))
        adj[j].append((int(i), int(e)))
    path = [None] * n_vertices  # bit set of forest edges from the component root
    tree = set()
    for root in range(n_vertices):
        if path[root] is not None:
            continue
        path[root] = 0
        queue = [root]
        for v in queue:
            for w, e in adj[v]:
                if path[w] is None:
                    path[w] = path[v] | (1 << e)
                    tree.add(e)
                    queue.append(w)
    out = []
    for e in edge_ids:
        if int(e) not in tree:
            i, j = edges[e]
            out.append(path[i] ^ path[j] ^ (1 << int(e)))
    return out


def check_cycle_coverage(g: UnwrapGraph, edge_sets: Sequence) -> bool:
    """True iff the cycle spaces of the given edge subsets of ``g`` together span that of ``g``."""
    vectors = []
    for ids in edge_sets:
        vectors.extend(cycle_space_vectors(g.n_vertices, g.edges, ids))
    return gf2_rank(vectors) == g.cyclomatic_number


def check_coverage_condition(d: Decomposition, full_basis=None) -> bool:
    """True iff the subgraph cycle bases jointly span the full cycle space (over GF(2)).

    ``full_basis`` only supplies the target dimension; by default it is
    ``|E| - |V| + 1``.
    """
    g = d.graph
    target = g.cyclomatic_number if full_basis is None else full_basis.n_cycles
    vectors = []
    for s in d.subgraphs:
        vectors.extend(cycle_space_vectors(g.n_vertices, g.edges, s.edge_ids))
    return gf2_rank(vectors) == target


# --------------------------------------------------------------------------
# text dump
# --------------------------------------------------------------------------


def dump_decomposition(d: Decomposition, arc_level: Optional[int] = None) -> str:
    """Line format: header ``rows cols r`` then ``i j k1 k2 ...`` per edge."""
    g = d.graph
    r = g.arc_level if arc_level is None else arc_level
    buf = io.StringIO()
    buf.write(f"{g.rows if g.rows is not None else 0} {g.cols if g.cols is not None else g.n_vertices} "
              f"{r if r is not None else -1}\n")
    for e, (i, j) in enumerate(g.edges):
        ks = " ".join(str(k) for k in d.edge_membership(e))
        buf.write(f"{i} {j} {ks}\n")
    return buf.getvalue()


def parse_dump(text: str):
    """Inverse of :func:`dump_decomposition`: ``(rows, cols, r, edges, memberships)``."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    rows, cols, r = (int(t) for t in lines[0].split())
    edges, members = [], []
    for ln in lines[1:]:
        toks = [int(t) for t in ln.split()]
        edges.append((toks[0], toks[1]))
        members.append(tuple(toks[2:]))
    return rows, cols, r, np.array(edges, dtype=np.int64).reshape(-1, 2), members
