"""Reweighted Lasso against the Lasso on the Rademacher-noise counter-example design.

Writes results/dalalyan.csv and results/dalalyan.svg.  Extra arguments are passed to
`slowrate experiment dalalyan`, for example `--trials 10 --n 16,32,64`.
"""
import sys
from pathlib import Path

from slowrate.harness_cli import main

if __name__ == "__main__":
    out = Path(__file__).resolve().parent.parent / "results"
    out.mkdir(exist_ok=True)
    sys.exit(main(["experiment", "dalalyan", "--out", str(out / "dalalyan.csv"),
                   "--svg", str(out / "dalalyan.svg"), *sys.argv[1:]]))
