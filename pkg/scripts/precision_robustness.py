"""Preconditioner invocations of fp64/fp32/fp16-F3R over problems and block counts."""
import argparse
import csv
import sys

from nestkrylov.bench import RunConfig, cmd_sweep
from nestkrylov.precision import Precision


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--stencils", default="hpcg_5_5_5,hpgmp_5_5_5")
    ap.add_argument("--blocks", default="4,112")
    ap.add_argument("--repeats", type=int, default=1)
    args = ap.parse_args()
    out = csv.writer(sys.stdout)
    out.writerow(["stencil", "blocks", "mode", "converged", "outer_iterations", "precond_invocations",
                  "ratio_to_fp64", "wall_seconds"])
    for stencil in args.stencils.split(","):
        for blocks in map(int, args.blocks.split(",")):
            cfg = RunConfig(stencil=stencil, precond_blocks=blocks, repeats=args.repeats)
            rows = cmd_sweep(cfg, {"mode": [Precision.P64, Precision.P32, Precision.P16]})
            base = rows[0]["precond_invocations"]
            for r in rows:
                out.writerow([stencil, blocks, r["mode"], r["converged"], r["outer_iterations"],
                              r["precond_invocations"], f"{r['precond_invocations'] / base:.3f}",
                              f"{r['wall_seconds']:.3f}"])


if __name__ == "__main__":
    main()
