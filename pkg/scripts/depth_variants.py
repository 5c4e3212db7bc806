"""Nesting-depth variants against the reference solvers on one problem (CSV on stdout)."""
import argparse
import csv
import sys

from nestkrylov.bench import COMPARE_FIELDS, REFERENCE_SOLVERS, RunConfig, cmd_compare
from nestkrylov.nesting import VARIANTS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--stencil", default="hpcg_5_5_5")
    ap.add_argument("--blocks", type=int, default=112)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    cfg = RunConfig(stencil=args.stencil, precond_blocks=args.blocks, repeats=args.repeats)
    solvers = ["fgmres64", *[s for s in REFERENCE_SOLVERS if s != "fgmres64"], *VARIANTS]
    if not args.stencil.startswith("hpcg"):
        solvers.remove("cg")
    w = csv.DictWriter(sys.stdout, fieldnames=COMPARE_FIELDS)
    w.writeheader()
    w.writerows(cmd_compare(cfg, solvers))


if __name__ == "__main__":
    main()
