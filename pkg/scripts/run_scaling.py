"""Scaling simulation: l0, Lasso, SCAD and MCP prediction error against n.

Writes results/scaling.csv and results/scaling.svg.  Extra arguments are passed to
`slowrate experiment scaling`, for example `--trials 10 --n 16,32,64`.
"""
import sys
from pathlib import Path

from slowrate.harness_cli import main

if __name__ == "__main__":
    out = Path(__file__).resolve().parent.parent / "results"
    out.mkdir(exist_ok=True)
    sys.exit(main(["experiment", "scaling", "--out", str(out / "scaling.csv"),
                   "--svg", str(out / "scaling.svg"), *sys.argv[1:]]))
