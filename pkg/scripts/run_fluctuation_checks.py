"""Distributional diagnostics: height CLT sample, mixing rate, and the
iterated-logarithm band check.
"""
import sys

from kpztorus.cli import main

OUT = "results/fluctuations"

runs = [
    ["clt-height", "--beta", "1.0", "--n", "32", "--dt", "2.5e-4",
     "--t", "50.0", "--n-replicas", "2000", "--seed", "1", "--outdir", OUT],
    ["mixing", "--beta", "1.0", "--n", "64", "--dt", "1e-3",
     "--t-max", "2.0", "--n-pairs", "16", "--seed", "2", "--outdir", OUT],
    ["lil", "--beta", "1.0", "--n", "32", "--dt", "1e-3",
     "--t-max", "1000.0", "--n-replicas", "100", "--seed", "3",
     "--outdir", OUT],
]

if __name__ == "__main__":
    for argv in runs:
        code = main(argv)
        if code != 0:
            sys.exit(code)
