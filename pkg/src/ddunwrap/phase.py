"""Wrapped phase fields, wrapped gradients, edge costs and integration of flows."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter

from .graph import CycleBasis, UnwrapGraph, build_cycle_basis

TWO_PI = 2.0 * np.pi
COST_UNIT = 1_000_000  # integer cost units per unit of real cost

SHAPES = ("ramp", "bump", "sine", "saddle")


class InconsistentFlowError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WrappedField:
    """Measured wrapped phase on a pixel grid.

    ``psi`` holds float32-representable radians in ``[-pi, pi)`` so that the
    binary field format round-trips exactly.
    """

    psi: np.ndarray
    truth_n: Optional[np.ndarray] = None
    noise_variance: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=np.float64)
        if psi.ndim != 2:
            raise ValueError("psi must be a 2-D array")
        if np.any(psi < -np.pi) or np.any(psi >= np.pi):
            raise ValueError("wrapped phase must lie in [-pi, pi)")
        object.__setattr__(self, "psi", psi)
        if self.truth_n is not None:
            tn = np.asarray(self.truth_n, dtype=np.int64)
            if tn.shape != psi.shape:
                raise ValueError("truth_n shape mismatch")
            object.__setattr__(self, "truth_n", tn)

    @property
    def rows(self) -> int:
        return self.psi.shape[0]

    @property
    def cols(self) -> int:
        return self.psi.shape[1]


@dataclass(frozen=True, eq=False)
class UnwrapResult:
    """Cycle counts ``n``, unwrapped phase ``phi`` and the ``(E, 2)`` arc flows they came from."""

    n: np.ndarray
    phi: np.ndarray
    anchor: int = 0
    flows: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class CostModel:
    """Per-edge costs in ``[0, 1]`` quantised to ``1 / COST_UNIT``."""

    units: np.ndarray
    scheme: str = "variance"

    @property
    def costs(self) -> np.ndarray:
        return self.units / COST_UNIT

    metric_exponent = 1


def wrap(x):
    """Wrap radians into ``[-pi, pi)``."""
    return (np.asarray(x) + np.pi) % TWO_PI - np.pi


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def wrapped_gradient(psi_i, psi_j):
    """Nearest integer to ``(psi_i - psi_j) / 2pi``, ties rounded away from zero."""
    out = round_half_away((np.asarray(psi_i, dtype=float) - np.asarray(psi_j, dtype=float)) / TWO_PI)
    return out.astype(np.int64) if out.ndim else int(out)


def edge_wrapped_gradients(psi: np.ndarray, g: UnwrapGraph) -> np.ndarray:
    flat = np.asarray(psi, dtype=float).ravel()
    return wrapped_gradient(flat[g.edges[:, 0]], flat[g.edges[:, 1]])


# --------------------------------------------------------------------------
# synthesis
# --------------------------------------------------------------------------


def surface(shape: str, rows: int, cols: int, **params) -> np.ndarray:
    """Smooth true phase surface in radians.

    ramp
        ``slope_x * col + slope_y * row`` (``slope`` sets both; default 0.1 rad/px on x).
    bump
        Gaussian of height ``amplitude`` (default 20) and width ``width``
        (default ``min(rows, cols) / 4``) centred in the image.
    sine
        ``amplitude * sin(2 pi col / period) * cos(2 pi row / period)``.
    saddle
        ``curvature * ((col - cx)^2 - (row - cy)^2)``.
    """
    r, c = np.meshgrid(np.arange(rows, dtype=float), np.arange(cols, dtype=float), indexing="ij")
    if shape == "ramp":
        slope = params.get("slope")
        sx = params.get("slope_x", 0.1 if slope is None else slope)
        sy = params.get("slope_y", 0.0 if slope is None else slope)
        return sx * c + sy * r
    if shape == "bump":
        amp = params.get("amplitude", 20.0)
        width = params.get("width", min(rows, cols) / 4.0)
        cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
        return amp * np.exp(-((r - cy) ** 2 + (c - cx) ** 2) / (2.0 * width ** 2))
    if shape == "sine":
        amp = params.get("amplitude", 6.0)
        period = params.get("period", max(rows, cols) / 1.5)
        return amp * np.sin(TWO_PI * c / period) * np.cos(TWO_PI * r / period)
    if shape == "saddle":
        k = params.get("curvature", 0.02)
        cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
        return k * ((c - cx) ** 2 - (r - cy) ** 2)
    raise ValueError(f"unknown surface shape {shape!r}; expected one of {SHAPES}")


def _to_float32_range(psi: np.ndarray) -> np.ndarray:
    f = psi.astype(np.float32)
    hi = np.nextafter(np.float32(np.pi), np.float32(0))
    lo = np.nextafter(np.float32(-np.pi), np.float32(0))
    f = np.where(f.astype(np.float64) >= np.pi, hi, f)
    f = np.where(f.astype(np.float64) < -np.pi, lo, f)
    return f.astype(np.float64)


def synthesize(shape: str, rows: int, cols: int, noise_variance: float = 0.0, seed: int = 0,
               **params) -> WrappedField:
    """Wrapped interferogram: true surface plus Gaussian phase noise, wrapped.

    ``truth_n`` is computed from the noisy, unwrapped field, so it measures
    unwrapping error only.
    """
    if noise_variance < 0:
        raise ValueError("noise variance must be nonnegative")
    phi = surface(shape, rows, cols, **params)
    rng = np.random.default_rng(seed)
    noisy = phi + rng.normal(0.0, np.sqrt(noise_variance), size=phi.shape) if noise_variance > 0 else phi
    psi = _to_float32_range(wrap(noisy))
    truth = np.rint((noisy - psi) / TWO_PI).astype(np.int64)
    meta = {"shape": shape, "seed": int(seed), "params": dict(params)}
    return WrappedField(psi, truth, float(noise_variance), meta)


def itoh_margin(phi: np.ndarray, g: UnwrapGraph) -> float:
    """Largest absolute true phase difference over the graph's edges (Itoh needs < pi)."""
    flat = np.asarray(phi, dtype=float).ravel()
    return float(np.max(np.abs(flat[g.edges[:, 0]] - flat[g.edges[:, 1]])))


# --------------------------------------------------------------------------
# costs
# --------------------------------------------------------------------------


def _local_gradient_variance(psi: np.ndarray) -> np.ndarray:
    gx = np.zeros_like(psi)
    gy = np.zeros_like(psi)
    gx[:, :-1] = wrap(psi[:, 1:] - psi[:, :-1])
    gx[:, -1] = gx[:, -2] if psi.shape[1] > 1 else 0.0
    gy[:-1, :] = wrap(psi[1:, :] - psi[:-1, :])
    gy[-1, :] = gy[-2, :] if psi.shape[0] > 1 else 0.0
    var = np.zeros_like(psi)
    for gr in (gx, gy):
        mean = uniform_filter(gr, size=3, mode="nearest")
        sq = uniform_filter(gr * gr, size=3, mode="nearest")
        var += np.maximum(sq - mean * mean, 0.0)
    return var


def quantize_costs(costs) -> np.ndarray:
    return np.rint(np.asarray(costs, dtype=float) * COST_UNIT).astype(np.int64)


def compute_costs(f: WrappedField, g: UnwrapGraph, scheme: str = "variance") -> CostModel:
    """Edge reliability costs scaled to ``[0, 1]``.

    ``variance``: ``1 / (1 + v)`` where ``v`` is the local 3x3 variance of
    wrapped phase gradients averaged over the edge's endpoints and midpoint
    pixel, then min-max scaled. ``uniform``: every cost 1.
    """
    if scheme == "uniform":
        return CostModel(np.full(g.n_edges, COST_UNIT, dtype=np.int64), scheme)
    if scheme != "variance":
        raise ValueError(f"unknown cost scheme {scheme!r}")
    var = _local_gradient_variance(f.psi).ravel()
    a, b = g.edges[:, 0], g.edges[:, 1]
    cols = f.cols
    mid = ((a // cols + b // cols) // 2) * cols + (a % cols + b % cols) // 2
    v = (var[a] + var[b] + var[mid]) / 3.0
    raw = 1.0 / (1.0 + v)
    lo, hi = raw.min(), raw.max()
    if hi - lo <= 1e-12 * hi:
        scaled = np.ones_like(raw)
    else:
        scaled = (raw - lo) / (hi - lo)
    return CostModel(quantize_costs(scaled), scheme)


# --------------------------------------------------------------------------
# integration
# --------------------------------------------------------------------------


def net_flow(flows) -> np.ndarray:
    """Per-edge net flow ``d_ij - d_ji`` from ``(E, 2)`` arc flows."""
    fl = np.asarray(flows).reshape(-1, 2)
    return (fl[:, 0] - fl[:, 1]).astype(np.int64)


def integrate_tree(basis: CycleBasis, g: UnwrapGraph, dprime: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Cycle counts from the tree edges only: ``n_j = n_i + d'_ij - x_ij``."""
    step = np.asarray(dprime, dtype=np.int64) - np.asarray(x, dtype=np.int64)
    n = np.zeros(g.n_vertices, dtype=np.int64)
    kids = basis.order[1:]
    pe = basis.parent_edge[kids]
    par = basis.parent[kids]
    signed = np.where(g.edges[pe, 0] == par, step[pe], -step[pe])
    depth = basis.depth[kids]
    # order is root-first, so one level at a time
    bounds = np.flatnonzero(np.diff(depth)) + 1
    for lo, hi in zip(np.r_[0, bounds], np.r_[bounds, len(kids)]):
        n[kids[lo:hi]] = n[par[lo:hi]] + signed[lo:hi]
    return n - n[basis.root]


def flows_from_potentials(g: UnwrapGraph, dprime: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Minimal arc flows ``(E, 2)`` realising ``x_ij = d'_ij - (n_j - n_i)``."""
    x = np.asarray(dprime, dtype=np.int64) - (n[g.edges[:, 1]] - n[g.edges[:, 0]])
    return np.stack([np.maximum(x, 0), np.maximum(-x, 0)], axis=1)


def integrate_flows(f: WrappedField, g: UnwrapGraph, flows, basis: Optional[CycleBasis] = None,
                    anchor: Optional[int] = None, delta_prime=None) -> UnwrapResult:
    """Integrate corrected gradients along a spanning tree.

    ``delta_prime`` overrides the wrapped gradients computed from ``f``.
    Raises ``InconsistentFlowError`` when the flows violate a cycle constraint,
    i.e. when some edge disagrees with the tree integration.
    """
    if basis is None:
        basis = build_cycle_basis(g, root=0 if anchor is None else anchor, cycles=False)
    dprime = edge_wrapped_gradients(f.psi, g) if delta_prime is None else np.asarray(delta_prime, dtype=np.int64)
    x = net_flow(flows)
    n = integrate_tree(basis, g, dprime, x)
    resid = x - (dprime - (n[g.edges[:, 1]] - n[g.edges[:, 0]]))
    bad = np.flatnonzero(resid)
    if len(bad):
        i, j = g.edges[bad[0]]
        raise InconsistentFlowError(
            f"flows violate {len(bad)} edge constraints (first at edge {i}-{j}, residual {resid[bad[0]]})")
    n2 = n.reshape(f.rows, f.cols)
    fl = np.asarray(flows, dtype=np.int64).reshape(-1, 2)
    return UnwrapResult(n=n2, phi=f.psi + TWO_PI * n2, anchor=int(basis.root), flows=fl)


def inconsistency(result, truth_n) -> float:
    """Percentage of pixels whose cycle count differs from truth after aligning the offset."""
    n = np.asarray(getattr(result, "n", result), dtype=np.int64).ravel()
    t = np.asarray(truth_n, dtype=np.int64).ravel()
    vals, counts = np.unique(t - n, return_counts=True)
    shift = vals[np.argmax(counts)]
    return 100.0 * np.count_nonzero(n + shift != t) / n.size
