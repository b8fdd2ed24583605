"""Experiment drivers: single-field unwrapping, dataset generation, benchmarks and traces."""
from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .decomposition import build_decomposition, single_decomposition
from .dual import DDConfig, RunReport, run
from .graph import build_grid_graph
from .io import atomic_write, write_field
from .mcf import SOLVERS, build_dual_network
from .oracle import lp_from_graph, solve_graph_lp, solve_lp_exact
from .phase import (
    COST_UNIT,
    SHAPES,
    UnwrapResult,
    WrappedField,
    compute_costs,
    edge_wrapped_gradients,
    inconsistency,
    integrate_flows,
    synthesize,
)

SOLVER_CHOICES = ("cost-scaling", "simplex", "oracle", "mcf-only")
THREADS_ENV = "UNWRAP_DD_THREADS"
BLAND_LIMIT = 400  # arc variables; larger oracle instances use the HiGHS engine
DENSE_LIMIT = 4000  # beyond this the oracle skips the dense matrix
BENCH_COLUMNS = ("image", "size", "r", "sigma2", "instance", "seed", "solver", "iterations",
                 "solver_seconds", "total_seconds", "objective", "inconsistency", "converged")
TRACE_COLUMNS = ("iter", "dual", "best_dual", "alpha", "agreement_fraction", "phase")


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep and solver settings shared by the command-line tools."""

    shapes: tuple = ("bump",)
    sizes: tuple = (32, 64)
    noise_levels: tuple = (0.4, 0.6, 0.8, 1.0)
    instances: int = 10
    arc_levels: tuple = (1, 2)
    solver: str = "cost-scaling"
    solvers: tuple = ("cost-scaling", "simplex")
    seed: int = 0
    alpha0: float = 0.1
    polyak_scale: float = DDConfig.polyak_scale
    deflection: float = DDConfig.deflection
    step_rule: str = DDConfig.step_rule
    window: int = DDConfig.window
    max_iter: int = 2000
    capacity: int = 1
    cost_scheme: str = "variance"
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        for name in ("shapes", "sizes", "noise_levels", "arc_levels", "solvers"):
            val = getattr(self, name)
            if isinstance(val, (str, int, float)):
                val = (val,)
            val = tuple(val)
            if not val:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, val)
        if any(s not in SHAPES for s in self.shapes):
            raise ValueError(f"shapes must be drawn from {SHAPES}")
        if any(v < 0 for v in self.noise_levels):
            raise ValueError("noise levels must be nonnegative")
        if any(s < 2 for s in self.sizes):
            raise ValueError("sizes must be at least 2")
        if any(r not in (0, 1, 2) for r in self.arc_levels):
            raise ValueError("arc levels must be 0, 1 or 2")
        for s in (self.solver, *self.solvers):
            if s not in SOLVER_CHOICES:
                raise ValueError(f"unknown solver {s!r}; expected one of {SOLVER_CHOICES}")
        if self.instances < 1:
            raise ValueError("instances must be at least 1")

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        clean = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = set(clean) - names
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**clean)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def dd_config(self, backend: Optional[str] = None) -> DDConfig:
        backend = backend if backend in SOLVERS else "cost-scaling"
        return DDConfig(alpha0=self.alpha0, polyak_scale=self.polyak_scale,
                        deflection=self.deflection, step_rule=self.step_rule,
                        window=self.window, max_iter=self.max_iter, capacity=self.capacity,
                        solver=backend, workers=max(1, min(self.workers, worker_cap())))


def worker_cap() -> int:
    """Upper bound on worker parallelism from ``UNWRAP_DD_THREADS`` (default: CPU count)."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    return os.cpu_count() or 1


@dataclass
class Outcome:
    result: UnwrapResult
    objective_units: int
    solver: str
    arc_level: int
    iterations: int
    converged: bool
    solver_seconds: float
    total_seconds: float
    report: Optional[RunReport] = None
    extra: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return self.objective_units / COST_UNIT

    def summary(self, truth_n=None) -> dict:
        out = {
            "solver": self.solver, "arc_level": self.arc_level, "objective": self.objective,
            "objective_units": self.objective_units, "iterations": self.iterations,
            "converged": self.converged, "solver_seconds": self.solver_seconds,
            "total_seconds": self.total_seconds,
        }
        if truth_n is not None:
            out["inconsistency"] = inconsistency(self.result, truth_n)
        out.update(self.extra)
        return out


def prepare_graph(f: WrappedField, arc_level: int, cost_scheme: str = "variance"):
    g = build_grid_graph(f.rows, f.cols, arc_level)
    return g.with_costs(compute_costs(f, g, cost_scheme).costs)


def unwrap_field(f: WrappedField, arc_level: int = 1, solver: str = "cost-scaling",
                 dd: DDConfig = DDConfig(), cost_scheme: str = "variance",
                 oracle_method: str = "auto") -> Outcome:
    """Unwrap one field.

    ``solver`` is ``"cost-scaling"`` or ``"simplex"`` (dual decomposition with
    that backend; a single subgraph when ``arc_level`` is 0), ``"mcf-only"``
    (direct flow solve on the 4-neighbour grid, ignoring ``arc_level``) or
    ``"oracle"`` (LP on the full graph).
    """
    if solver not in SOLVER_CHOICES:
        raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVER_CHOICES}")
    t0 = time.perf_counter()
    if solver == "mcf-only":
        g = prepare_graph(f, 0, cost_scheme)
        d = single_decomposition(g)
        s = d.subgraphs[0]
        dp = edge_wrapped_gradients(f.psi, g)
        net = build_dual_network(s.faces, dp, arc_costs=g.arc_costs, capacity=dd.capacity)
        t1 = time.perf_counter()
        sol = SOLVERS[dd.solver](net)
        ts = time.perf_counter() - t1
        flows = sol.flow.reshape(-1, 2)
        res = integrate_flows(f, g, flows)
        return Outcome(res, sol.objective_units, solver, 0, 1, True, ts, time.perf_counter() - t0)

    g = prepare_graph(f, arc_level, cost_scheme)
    if solver == "oracle":
        dp = edge_wrapped_gradients(f.psi, g)
        n_vars = 2 * g.n_edges
        method = oracle_method
        if method == "auto":
            method = "bland" if n_vars <= BLAND_LIMIT else "highs" if n_vars <= DENSE_LIMIT else "sparse"
        t1 = time.perf_counter()
        if method == "sparse":
            lp = solve_graph_lp(g, dp, capacity=dd.capacity)
        else:
            lp = solve_lp_exact(lp_from_graph(g, dp, capacity=dd.capacity), method=method)
        ts = time.perf_counter() - t1
        if lp.status != "optimal":
            raise RuntimeError(f"oracle LP is {lp.status}")
        flows = lp.x.reshape(-1, 2).astype(np.int64)
        res = integrate_flows(f, g, flows)
        units = int(np.rint(g.arc_costs * COST_UNIT).astype(np.int64) @ flows.sum(axis=1))
        return Outcome(res, units, solver, arc_level, 1, True, ts, time.perf_counter() - t0,
                       extra={"oracle_method": method})

    d = single_decomposition(g) if arc_level == 0 else build_decomposition(g)
    res, report = run(f, g, d, replace(dd, solver=solver))
    return Outcome(res, report.final_objective_units, solver, arc_level, report.iterations,
                   report.converged, report.timings["solver_seconds"], time.perf_counter() - t0, report)


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------


def instance_seed(config: ExperimentConfig, instance: int) -> int:
    return int(config.seed) + int(instance)


def field_name(shape: str, size: int, noise: float, instance: int) -> str:
    return f"{shape}_{size}x{size}_s{noise:.2f}_i{instance:02d}.phwr"


def generate(config: ExperimentConfig, output_dir=None) -> list:
    """Write one field file per (shape, size, noise level, instance)."""
    out = Path(output_dir or config.output_dir)
    paths = []
    for shape in config.shapes:
        for size in config.sizes:
            for noise in config.noise_levels:
                for i in range(config.instances):
                    f = synthesize(shape, size, size, noise, instance_seed(config, i))
                    paths.append(write_field(out / field_name(shape, size, noise, i), f))
    return paths


def _bench_task(args):
    config, shape, size, r, noise, i = args
    seed = instance_seed(config, i)
    f = synthesize(shape, size, size, noise, seed)
    rows = []
    for solver in config.solvers:
        o = unwrap_field(f, r, solver, config.dd_config(solver), config.cost_scheme)
        rows.append({
            "image": shape, "size": size, "r": 0 if solver == "mcf-only" else r, "sigma2": noise,
            "instance": i, "seed": seed, "solver": solver, "iterations": o.iterations,
            "solver_seconds": round(o.solver_seconds, 6), "total_seconds": round(o.total_seconds, 6),
            "objective": f"{o.objective:.6f}", "inconsistency": round(inconsistency(o.result, f.truth_n), 4),
            "converged": o.converged,
        })
    return rows


def bench(config: ExperimentConfig) -> list:
    """Run every solver in ``config.solvers`` on identical instances; one row per solve."""
    tasks = [(config, shape, size, r, noise, i)
             for shape in config.shapes for size in config.sizes for r in config.arc_levels
             for noise in config.noise_levels for i in range(config.instances)]
    workers = max(1, min(config.workers, worker_cap()))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(_bench_task, tasks))
    else:
        chunks = [_bench_task(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def trace(f: WrappedField, arc_level: int, config: ExperimentConfig):
    """Per-iteration dual trace of one dual decomposition run: ``(rows, outcome)``."""
    solver = config.solver if config.solver in SOLVERS else "cost-scaling"
    o = unwrap_field(f, arc_level, solver, config.dd_config(solver), config.cost_scheme)
    rows = []
    for row, phase in zip(o.report.trace_rows(), o.report.phases):
        rows.append({"iter": row["iter"], "dual": f"{row['dual']:.6f}", "best_dual": f"{row['best_dual']:.6f}",
                     "alpha": row["alpha"], "agreement_fraction": row["agreement"], "phase": phase})
    return rows, o


def rows_to_csv(rows: list, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: row.get(k, "") for k in columns})
    return buf.getvalue()


def write_csv(path, rows: list, columns) -> Path:
    return atomic_write(path, rows_to_csv(rows, columns))
