"""Winding diffusivity by simulation (path variance and covariance sum)
and by bridge Monte Carlo, plus a quenched-law snapshot in one environment.
"""
import sys

from kpztorus.cli import main

OUT = "results/winding"

runs = [
    ["winding-sigma", "--beta", "1.0", "--n", "32", "--dt", "4e-3",
     "--t", "50.0", "--n-env", "50", "--seed", "1", "--outdir", OUT],
    ["winding-mc", "--beta", "1.0", "--n", "20000", "--seed", "2",
     "--outdir", OUT],
    ["winding-quenched", "--beta", "1.0", "--n", "32", "--dt", "4e-3",
     "--t", "10.0", "--seed", "3", "--outdir", OUT],
    ["report", "--dir", OUT],
]

if __name__ == "__main__":
    for argv in runs:
        code = main(argv)
        if code != 0:
            sys.exit(code)
