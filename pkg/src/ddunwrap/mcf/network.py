"""Face-dual flow network of an embedded planar subgraph."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..phase import COST_UNIT, quantize_costs


class ResidueImbalanceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DualNetwork:
    """Min-cost flow network on faces.

    Arc ``2e`` carries the forward primal variable ``d_ij`` of local edge ``e``
    from its left face to its right face; arc ``2e + 1`` carries ``d_ji`` the
    other way. Node supplies are face residues (outflow - inflow = supply).
    Costs are integers in ``1 / COST_UNIT`` units.
    """

    n_nodes: int
    tail: np.ndarray
    head: np.ndarray
    capacity: np.ndarray
    cost_units: np.ndarray
    supply: np.ndarray
    outer: int = -1

    @property
    def n_arcs(self) -> int:
        return len(self.tail)

    @property
    def costs(self) -> np.ndarray:
        return self.cost_units / COST_UNIT

    def with_costs(self, cost_units) -> "DualNetwork":
        cu = np.asarray(cost_units, dtype=np.int64)
        if cu.shape != self.tail.shape:
            raise ValueError("one cost per arc is required")
        return DualNetwork(self.n_nodes, self.tail, self.head, self.capacity, cu, self.supply, self.outer)


def face_residues(faces, delta_prime) -> np.ndarray:
    """Signed sum of wrapped gradients around each face, walking its boundary.

    A half-edge traversed along the edge's canonical direction contributes
    ``+d'``, the reverse ``-d'``.
    """
    dp = np.asarray(delta_prime, dtype=np.int64)
    res = np.zeros(faces.n_faces, dtype=np.int64)
    for f, walk in enumerate(faces.boundaries):
        if walk:
            e, s = np.asarray(walk, dtype=np.int64).T
            res[f] = int(np.dot(s, dp[e]))
    return res


def build_dual_network(faces, delta_prime, arc_costs=None, capacity=1, cost_units=None) -> DualNetwork:
    """Dual network of a planar subgraph.

    Parameters
    ----------
    faces : FaceList
        Faces of the subgraph's embedding, indexed by local edge.
    delta_prime : array of int, shape (E,)
        Wrapped gradient of each local edge in its canonical direction.
    arc_costs : array, shape (E,) or (E, 2)
        Real costs of ``(d_ij, d_ji)``; a 1-D array is shared by both arcs.
    cost_units : array of int, shape (E, 2), optional
        Integer costs, used instead of ``arc_costs``.
    """
    dp = np.asarray(delta_prime, dtype=np.int64)
    m = len(dp)
    if len(faces.left) != m:
        raise ValueError("delta_prime must have one entry per subgraph edge")
    supply = face_residues(faces, dp)
    if supply.sum() != 0:
        raise ResidueImbalanceError(f"face residues sum to {supply.sum()}, expected 0")
    if cost_units is None:
        c = np.zeros(m) if arc_costs is None else np.asarray(arc_costs, dtype=float)
        if c.ndim == 1:
            c = np.stack([c, c], axis=1)
        cost_units = quantize_costs(c)
    cu = np.asarray(cost_units, dtype=np.int64).reshape(m, 2)
    tail = np.empty(2 * m, dtype=np.int64)
    head = np.empty(2 * m, dtype=np.int64)
    tail[0::2], head[0::2] = faces.left, faces.right
    tail[1::2], head[1::2] = faces.right, faces.left
    cap = np.broadcast_to(np.asarray(capacity, dtype=np.int64), (2 * m,)).copy()
    return DualNetwork(int(faces.n_faces), tail, head, cap, cu.reshape(-1).copy(), supply, int(faces.outer))


def extract_primal_flows(net: DualNetwork, sol) -> np.ndarray:
    """Primal arc variables ``(d_ij, d_ji)`` per local edge, shape ``(E, 2)``."""
    flow = getattr(sol, "flow", sol)
    return np.asarray(flow, dtype=np.int64).reshape(-1, 2)


# --------------------------------------------------------------------------
# DIMACS min-cost flow text format
# --------------------------------------------------------------------------


def to_dimacs(net: DualNetwork, comment: Optional[str] = None) -> str:
    lines = []
    if comment:
        lines.extend(f"c {ln}" for ln in comment.splitlines())
    lines.append(f"p min {net.n_nodes} {net.n_arcs}")
    for v in np.flatnonzero(net.supply):
        lines.append(f"n {v + 1} {net.supply[v]}")
    for a in range(net.n_arcs):
        lines.append(f"a {net.tail[a] + 1} {net.head[a] + 1} 0 {net.capacity[a]} {net.cost_units[a]}")
    return "\n".join(lines) + "\n"


class DimacsParseError(ValueError):
    pass


def from_dimacs(text: str) -> DualNetwork:
    n = m = None
    supply = None
    arcs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        tok = line.split()
        if not tok or tok[0] == "c":
            continue
        try:
            if tok[0] in ("n", "a") and n is None:
                raise DimacsParseError(f"line {lineno}: {tok[0]!r} record before the problem line")
            if tok[0] == "p":
                if tok[1] != "min":
                    raise DimacsParseError(f"line {lineno}: unsupported problem type {tok[1]!r}")
                n, m = int(tok[2]), int(tok[3])
                supply = np.zeros(n, dtype=np.int64)
            elif tok[0] == "n":
                supply[int(tok[1]) - 1] = int(tok[2])
            elif tok[0] == "a":
                u, v, low, cap, cost = (int(t) for t in tok[1:6])
                if low != 0:
                    raise DimacsParseError(f"line {lineno}: nonzero lower bounds are not supported")
                if not (1 <= u <= n and 1 <= v <= n):
                    raise DimacsParseError(f"line {lineno}: node id out of range 1..{n}")
                arcs.append((u - 1, v - 1, cap, cost))
            else:
                raise DimacsParseError(f"line {lineno}: unknown record {tok[0]!r}")
        except (IndexError, ValueError, TypeError) as exc:
            if isinstance(exc, DimacsParseError):
                raise
            raise DimacsParseError(f"line {lineno}: {exc}") from exc
    if n is None:
        raise DimacsParseError("missing problem line")
    if len(arcs) != m:
        raise DimacsParseError(f"expected {m} arcs, found {len(arcs)}")
    a = np.array(arcs, dtype=np.int64).reshape(-1, 4)
    return DualNetwork(n, a[:, 0].copy(), a[:, 1].copy(), a[:, 2].copy(), a[:, 3].copy(), supply)
