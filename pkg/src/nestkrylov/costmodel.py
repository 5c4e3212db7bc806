"""Memory-traffic models for FGMRES, Richardson and their two-level nestings.

All quantities are per unknown and exact: inputs are converted to
``Fraction`` so model identities hold without rounding.  The split size
``m_inner = m / m_outer`` is allowed to be fractional.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

FIVE_HALVES = Fraction(5, 2)


def _q(x) -> Fraction:
    if isinstance(x, Rational):
        return Fraction(x)
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


@dataclass(frozen=True)
class CostParams:
    """``c_a`` and ``c_m`` are per-row traffic constants of A and M; ``m`` the iteration count."""

    c_a: Fraction
    c_m: Fraction
    m: int

    def __post_init__(self):
        object.__setattr__(self, "c_a", _q(self.c_a))
        object.__setattr__(self, "c_m", _q(self.c_m))
        if self.c_a <= 0 or self.c_m <= 0:
            raise ValueError("traffic constants must be positive")
        if self.m < 1:
            raise ValueError("m must be >= 1")


def cost_fgmres(p: CostParams, m=None) -> Fraction:
    """Traffic of (F_m, M): c_a m + c_m m + 5/2 m^2."""
    m = _q(p.m if m is None else m)
    return p.c_a * m + p.c_m * m + FIVE_HALVES * m * m


def cost_richardson(p: CostParams, m=None) -> Fraction:
    """Traffic of (R_m, M) from a zero initial guess: c_a (m-1) + c_m m + 4 (m-1)."""
    m = _q(p.m if m is None else m)
    return p.c_a * (m - 1) + p.c_m * m + 4 * (m - 1)


def cost_nested_fgmres(m_outer, m_inner, p: CostParams) -> Fraction:
    """Traffic of (F_outer, F_inner, M)."""
    mo = _q(m_outer)
    return p.c_a * mo + cost_fgmres(p, m_inner) * mo + FIVE_HALVES * mo * mo


def cost_fgmres_richardson(m_outer, m_inner, p: CostParams) -> Fraction:
    """Traffic of (F_outer, R_inner, M)."""
    mo = _q(m_outer)
    return p.c_a * mo + cost_richardson(p, m_inner) * mo + FIVE_HALVES * mo * mo


@dataclass(frozen=True)
class Split:
    m_outer: int
    m_inner: Fraction
    kind: str  # "fgmres" or "richardson"
    cost: Fraction


_KIND_ORDER = {"fgmres": 0, "richardson": 1}


def advise_split(p: CostParams, allow_richardson: bool = True) -> list[Split]:
    """Every split m = m_outer * m_inner with integer m_outer in [1, m], cheapest first.

    Ties go to the smaller ``m_outer``, then FGMRES before Richardson.
    """
    rows = []
    for mo in range(1, p.m + 1):
        mi = Fraction(p.m, mo)
        rows.append(Split(mo, mi, "fgmres", cost_nested_fgmres(mo, mi, p)))
        if allow_richardson:
            rows.append(Split(mo, mi, "richardson", cost_fgmres_richardson(mo, mi, p)))
    rows.sort(key=lambda s: (s.cost, s.m_outer, _KIND_ORDER[s.kind]))
    return rows
