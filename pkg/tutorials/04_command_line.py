"""
The command-line workflow
=========================

Generates a small dataset, unwraps one file, traces the dual objective and
benchmarks the two flow backends, calling the same entry point as the
``ddunwrap`` console script. Output goes to a temporary directory.
"""

import json
import tempfile
from pathlib import Path

from ddunwrap.cli import main

work = Path(tempfile.mkdtemp(prefix="ddunwrap-"))
data, out = work / "data", work / "out"

# %%
# ``generate`` writes one PHWR file per (shape, size, noise, instance).
main(["generate", "--shapes", "bump", "saddle", "--sizes", "32", "--noise-levels", "0.4", "1.0",
      "--instances", "2", "--output-dir", str(data)])

# %%
# ``unwrap`` writes ``<name>.result.json`` and ``<name>.report.json``.
field = data / "bump_32x32_s1.00_i00.phwr"
code = main(["unwrap", str(field), "--arc-level", "2", "--output-dir", str(out)])
report = json.loads((out / "bump_32x32_s1.00_i00.report.json").read_text())
print("exit code", code, "| converged", report["converged"], "| final", report["final"])

# %%
# ``trace`` emits one CSV row per iteration; ``bench`` compares solvers.
main(["trace", str(field), "--arc-level", "1", "--output", str(work / "trace.csv")])
print((work / "trace.csv").read_text().splitlines()[:4])
main(["bench", "--shapes", "bump", "--sizes", "32", "--noise-levels", "0.4", "--instances", "2",
      "--arc-levels", "1", "--solvers", "mcf-only", "cost-scaling", "simplex", "--output", "-"])
print("files in", work)
