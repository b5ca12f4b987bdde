"""Height-variance rate sigma_L^2(beta) by three routes, plus the decay of
the rate in the period L.  Records land in results/sigma2/.
"""
import sys

from kpztorus.cli import main

OUT = "results/sigma2"

runs = [
    ["sigma2-mc", "--beta", "1.0", "--L", "1.0", "--n", "400000",
     "--seed", "1", "--outdir", OUT],
    ["sigma2-corrector", "--beta", "1.0", "--L", "1.0", "--n-outer", "20000",
     "--n-inner", "64", "--seed", "2", "--outdir", OUT],
    ["sigma2-decay", "--beta", "1.0", "--L-list", "1", "4", "16", "64",
     "--n", "200000", "--seed", "3", "--outdir", OUT],
    ["report", "--dir", OUT],
]

if __name__ == "__main__":
    for argv in runs:
        code = main(argv)
        if code != 0:
            sys.exit(code)
