"""Grid over the inner iteration counts m2, m3, m4 of fp16-F3R (CSV on stdout)."""
import argparse
import csv
import sys

from nestkrylov.bench import SWEEP_FIELDS, RunConfig, cmd_sweep
from nestkrylov.precision import Precision


def ints(text):
    return [int(t) for t in text.split(",")]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--stencil", default="hpgmp_5_5_5")
    ap.add_argument("--blocks", type=int, default=112)
    ap.add_argument("--m2", type=ints, default=[4, 8, 16])
    ap.add_argument("--m3", type=ints, default=[2, 4, 8])
    ap.add_argument("--m4", type=ints, default=[1, 2, 4])
    ap.add_argument("--mode", default="f16")
    ap.add_argument("--repeats", type=int, default=1)
    args = ap.parse_args()
    cfg = RunConfig(stencil=args.stencil, precond_blocks=args.blocks, repeats=args.repeats)
    grid = {"mode": [Precision.parse(m) for m in args.mode.split(",")], "m2": args.m2, "m3": args.m3, "m4": args.m4}
    w = csv.DictWriter(sys.stdout, fieldnames=SWEEP_FIELDS)
    w.writeheader()
    w.writerows(cmd_sweep(cfg, grid))


if __name__ == "__main__":
    main()
