"""Local descent with a ball oracle on Theorem-2 designs; error is the minimum over the lambda grid.

Writes results/descent.csv and results/descent.svg.  Extra arguments are passed to
`slowrate experiment descent`, for example `--trials 10 --n 16,32,64`.
"""
import sys
from pathlib import Path

from slowrate.harness_cli import main

if __name__ == "__main__":
    out = Path(__file__).resolve().parent.parent / "results"
    out.mkdir(exist_ok=True)
    sys.exit(main(["experiment", "descent", "--out", str(out / "descent.csv"),
                   "--svg", str(out / "descent.svg"), *sys.argv[1:]]))
