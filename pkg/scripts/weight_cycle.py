"""Richardson weight-update cycle c and fixed weights for fp16-F3R (CSV on stdout)."""
import argparse
import csv
import sys

from nestkrylov.bench import SWEEP_FIELDS, RunConfig, cmd_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--stencil", default="hpgmp_5_5_5")
    ap.add_argument("--blocks", type=int, default=112)
    ap.add_argument("--cycles", default="1,4,16,64,256,inf")
    ap.add_argument("--fixed", default="0.6,0.8,1.0,1.2")
    ap.add_argument("--repeats", type=int, default=1)
    args = ap.parse_args()
    cfg = RunConfig(stencil=args.stencil, precond_blocks=args.blocks, repeats=args.repeats)
    cycles = [None if c == "inf" else int(c) for c in args.cycles.split(",")]
    w = csv.DictWriter(sys.stdout, fieldnames=SWEEP_FIELDS)
    w.writeheader()
    w.writerows(cmd_sweep(cfg, {"c": cycles}))
    w.writerows(cmd_sweep(cfg, {"fixed_omega": [float(v) for v in args.fixed.split(",")]}))


if __name__ == "__main__":
    main()
