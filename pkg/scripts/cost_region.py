"""Where do the two-level splits beat plain FGMRES(m)?  Brute force over m and m_outer."""
import argparse
from fractions import Fraction

from nestkrylov.costmodel import CostParams, cost_fgmres, cost_fgmres_richardson, cost_nested_fgmres


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cA", type=float, default=45)
    ap.add_argument("--cM", type=float, default=45)
    ap.add_argument("--mmax", type=int, default=64)
    args = ap.parse_args()
    print("m,fgmres_cheaper_m_outer,richardson_cheaper_m_outer,richardson_equal_m_outer")
    for m in range(1, args.mmax + 1):
        p = CostParams(args.cA, args.cM, m)
        ref = cost_fgmres(p)
        nested = [mo for mo in range(1, m + 1) if cost_nested_fgmres(mo, Fraction(m, mo), p) < ref]
        rich = [mo for mo in range(1, m + 1) if cost_fgmres_richardson(mo, Fraction(m, mo), p) < ref]
        equal = [mo for mo in range(1, m + 1) if cost_fgmres_richardson(mo, Fraction(m, mo), p) == ref]
        print(f"{m},{_span(nested)},{_span(rich)},{_span(equal)}")


def _span(xs):
    if not xs:
        return "-"
    if xs == list(range(xs[0], xs[-1] + 1)):
        return f"{xs[0]}..{xs[-1]}" if len(xs) > 1 else str(xs[0])
    return " ".join(map(str, xs))


if __name__ == "__main__":
    main()
