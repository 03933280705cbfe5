"""Worst block local minimum against the bad-minimum bound terms T1 + T2 on Theorem-1 designs.

Writes results/landscape.csv and results/landscape.svg.  Extra arguments are passed to
`slowrate experiment landscape`, for example `--trials 10 --n 16,32,64`.
"""
import sys
from pathlib import Path

from slowrate.harness_cli import main

if __name__ == "__main__":
    out = Path(__file__).resolve().parent.parent / "results"
    out.mkdir(exist_ok=True)
    sys.exit(main(["experiment", "landscape", "--out", str(out / "landscape.csv"),
                   "--svg", str(out / "landscape.svg"), *sys.argv[1:]]))
