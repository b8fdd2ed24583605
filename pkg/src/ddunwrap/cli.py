"""Command-line interface: ``ddunwrap {generate,unwrap,bench,trace,verify}``.

Exit codes: 0 success, 1 usage error, 2 input error, 3 nonconvergence
(iteration cap reached), 4 failed self-check (``verify`` only).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .experiments import (
    BENCH_COLUMNS,
    SOLVER_CHOICES,
    TRACE_COLUMNS,
    ExperimentConfig,
    bench,
    generate,
    rows_to_csv,
    trace,
    unwrap_field,
    write_csv,
)
from .io import FieldFormatError, atomic_write, read_field
from .mcf import InfeasibleFlowError
from .phase import inconsistency

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_VERIFY = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: top level must be a table/object")
    return data


# flag name -> (type, nargs)
CONFIG_FLAGS = {
    "shapes": (str, "+"),
    "sizes": (int, "+"),
    "noise_levels": (float, "+"),
    "instances": (int, None),
    "arc_levels": (int, "+"),
    "solvers": (str, "+"),
    "seed": (int, None),
    "alpha0": (float, None),
    "polyak_scale": (float, None),
    "deflection": (float, None),
    "step_rule": (str, None),
    "window": (int, None),
    "max_iter": (int, None),
    "capacity": (int, None),
    "cost_scheme": (str, None),
    "output_dir": (str, None),
    "workers": (int, None),
}


def _add_config_flags(p: argparse.ArgumentParser, names):
    p.add_argument("--config", help="TOML or JSON file with ExperimentConfig fields")
    for name in names:
        typ, nargs = CONFIG_FLAGS[name]
        kwargs = {"type": typ, "default": None, "dest": name}
        if nargs:
            kwargs["nargs"] = nargs
        p.add_argument("--" + name.replace("_", "-"), **kwargs)


def _config(args, names) -> ExperimentConfig:
    data = load_config_file(args.config) if getattr(args, "config", None) else {}
    for name in names:
        val = getattr(args, name, None)
        if val is not None:
            data[name] = val
    if getattr(args, "solver", None) is not None:
        data["solver"] = args.solver
    try:
        return ExperimentConfig.from_mapping(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _read(path):
    try:
        return read_field(path)
    except FileNotFoundError as exc:
        raise InputError(f"{path}: no such file") from exc
    except FieldFormatError as exc:
        raise InputError(f"{path}: {exc}") from exc
    except (OSError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc


SWEEP_FLAGS = ("shapes", "sizes", "noise_levels", "instances", "seed", "output_dir", "workers")
SOLVE_FLAGS = ("alpha0", "polyak_scale", "deflection", "step_rule", "window", "max_iter", "capacity", "cost_scheme",
               "workers")


def cmd_generate(args) -> int:
    cfg = _config(args, SWEEP_FLAGS)
    paths = generate(cfg)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_unwrap(args) -> int:
    names = SOLVE_FLAGS + ("output_dir",)
    cfg = _config(args, names)
    f = _read(args.field)
    o = unwrap_field(f, args.arc_level, cfg.solver, cfg.dd_config(cfg.solver), cfg.cost_scheme)
    out = Path(args.output_dir or cfg.output_dir)
    stem = Path(args.field).name.rsplit(".", 1)[0]
    summary = o.summary(f.truth_n)
    result = {"rows": f.rows, "cols": f.cols, "anchor": o.result.anchor, "n": o.result.n.tolist(), **summary}
    atomic_write(out / f"{stem}.result.json", json.dumps(result))
    report = o.report.to_dict() if o.report is not None else {"config": cfg.to_dict(), "final": summary}
    report["config"] = {**cfg.to_dict(), "arc_level": args.arc_level, "field": str(args.field)}
    atomic_write(out / f"{stem}.report.json", json.dumps(report, indent=1))
    line = f"{stem}: solver={o.solver} r={o.arc_level} objective={o.objective:.6f} iterations={o.iterations}"
    if f.truth_n is not None:
        line += f" inconsistency={inconsistency(o.result, f.truth_n):.3f}%"
    print(line)
    if not o.converged:
        print("warning: iteration cap reached before convergence", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_bench(args) -> int:
    names = ("shapes", "sizes", "noise_levels", "instances", "arc_levels", "solvers", "seed") + SOLVE_FLAGS
    cfg = _config(args, names)
    rows = bench(cfg)
    if args.output == "-":
        sys.stdout.write(rows_to_csv(rows, BENCH_COLUMNS))
    else:
        path = args.output or str(Path(cfg.output_dir) / "bench.csv")
        print(write_csv(path, rows, BENCH_COLUMNS))
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = _config(args, SOLVE_FLAGS)
    f = _read(args.field)
    rows, o = trace(f, args.arc_level, cfg)
    if args.output in (None, "-"):
        sys.stdout.write(rows_to_csv(rows, TRACE_COLUMNS))
    else:
        write_csv(args.output, rows, TRACE_COLUMNS)
    return EXIT_OK if o.converged else EXIT_NONCONVERGED


def cmd_verify(args) -> int:
    from .verify import run_all

    results = run_all(quick=not args.full)
    ok = True
    for name, passed, detail in results:
        ok &= bool(passed)
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ddunwrap", description="Phase unwrapping by dual decomposition into planar flow problems.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write synthetic wrapped-phase field files")
    _add_config_flags(g, SWEEP_FLAGS)
    g.set_defaults(func=cmd_generate)

    u = sub.add_parser("unwrap", help="unwrap one field file")
    u.add_argument("field")
    u.add_argument("--arc-level", type=int, choices=(0, 1, 2), default=1)
    u.add_argument("--solver", choices=SOLVER_CHOICES, default=None)
    _add_config_flags(u, SOLVE_FLAGS + ("output_dir",))
    u.set_defaults(func=cmd_unwrap)

    b = sub.add_parser("bench", help="compare solvers over a synthetic sweep (CSV)")
    _add_config_flags(b, ("shapes", "sizes", "noise_levels", "instances", "arc_levels", "solvers", "seed",
                          "output_dir") + SOLVE_FLAGS)
    b.add_argument("--output", help="CSV path, '-' for stdout (default: <output-dir>/bench.csv)")
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("trace", help="per-iteration dual objective trace (CSV)")
    t.add_argument("field")
    t.add_argument("--arc-level", type=int, choices=(0, 1, 2), default=1)
    t.add_argument("--solver", choices=("cost-scaling", "simplex"), default=None)
    _add_config_flags(t, SOLVE_FLAGS)
    t.add_argument("--output", help="CSV path (default: stdout)")
    t.set_defaults(func=cmd_trace)

    v = sub.add_parser("verify", help="run the oracle and invariant self-checks")
    v.add_argument("--full", action="store_true", help="larger sample counts")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ddunwrap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"ddunwrap: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleFlowError as exc:
        print(f"ddunwrap: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"ddunwrap: I/O error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
