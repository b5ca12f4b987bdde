"""Compare the three Lyapunov-exponent routes at beta = 1, L = 1.

Writes one record per route into results/gamma/ and prints the report
table; rerunning with the same seeds reproduces the files bit for bit.
"""
import sys

from kpztorus.cli import main

OUT = "results/gamma"

runs = [
    ["gamma-closed", "--seed", "1", "--outdir", OUT],
    ["gamma-bridge", "--n", "1000000", "--seed", "2", "--outdir", OUT],
    ["gamma-simulate", "--n", "128", "--dt", "5e-4", "--T", "8.0",
     "--n-replicas", "200", "--extrapolate", "--seed", "3", "--outdir", OUT],
    ["report", "--dir", OUT],
]

if __name__ == "__main__":
    for argv in runs:
        code = main(argv)
        if code != 0:
            sys.exit(code)
