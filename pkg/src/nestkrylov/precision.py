"""Scalar precisions, rounding, and the mixed-precision promotion rule.

Three storage precisions are supported: IEEE binary64, binary32 and binary16.
Arithmetic on binary16 data is emulated by widening to binary32, computing,
and rounding the result back to binary16 when it is stored.
"""
from __future__ import annotations

import enum
import math
from fractions import Fraction

import numpy as np


class Precision(enum.IntEnum):
    P16 = 16
    P32 = 32
    P64 = 64

    @property
    def dtype(self) -> np.dtype:
        """Storage dtype."""
        return _STORAGE[self]

    @property
    def compute_dtype(self) -> np.dtype:
        """Dtype in which arithmetic at this precision is carried out."""
        return _COMPUTE[self]

    @property
    def unit_roundoff(self) -> float:
        return float(np.finfo(self.dtype).eps) / 2

    @property
    def label(self) -> str:
        return f"f{self.value}"

    @classmethod
    def parse(cls, text: str | "Precision") -> "Precision":
        if isinstance(text, Precision):
            return text
        key = str(text).strip().lower()
        try:
            return _NAMES[key]
        except KeyError:
            raise ValueError(f"unknown precision {text!r}") from None

    @classmethod
    def of(cls, array: np.ndarray) -> "Precision":
        """Precision declared by an array's dtype."""
        try:
            return _BY_DTYPE[np.dtype(array.dtype)]
        except KeyError:
            raise TypeError(f"unsupported dtype {array.dtype}") from None


_STORAGE = {
    Precision.P16: np.dtype(np.float16),
    Precision.P32: np.dtype(np.float32),
    Precision.P64: np.dtype(np.float64),
}
_COMPUTE = {
    Precision.P16: np.dtype(np.float32),
    Precision.P32: np.dtype(np.float32),
    Precision.P64: np.dtype(np.float64),
}
_BY_DTYPE = {v: k for k, v in _STORAGE.items()}
_NAMES = {}
for _p in Precision:
    for _alias in (f"f{_p.value}", f"fp{_p.value}", f"p{_p.value}", str(_p.value)):
        _NAMES[_alias] = _p
_NAMES.update({"half": Precision.P16, "single": Precision.P32, "double": Precision.P64})


def compute_precision(a: Precision, b: Precision) -> Precision:
    """Precision at which an operation on inputs of precision ``a`` and ``b`` runs."""
    return max(Precision(a), Precision(b))


def demote(x, p: Precision):
    """Round ``x`` (scalar or array) to precision ``p`` with round-to-nearest-even.

    Overflow produces signed infinity; binary16 subnormals are kept.
    """
    p = Precision(p)
    with np.errstate(over="ignore"):
        if np.ndim(x) == 0:
            return p.dtype.type(x)
        return np.asarray(x).astype(p.dtype)


def promote(x, p: Precision = Precision.P64):
    """Exact widening to precision ``p`` (must not be narrower than ``x``)."""
    return demote(x, p)


def store(x: np.ndarray, p: Precision) -> np.ndarray:
    """Round a compute-dtype array to storage precision ``p``."""
    if x.dtype == p.dtype:
        return x
    return x.astype(p.dtype)


def widen(x: np.ndarray, p: Precision) -> np.ndarray:
    """View ``x`` in the compute dtype of precision ``p`` (copy only if needed)."""
    dt = p.compute_dtype
    if x.dtype == dt:
        return x
    return x.astype(dt)


def round_scalar(value, p: Precision):
    """Round a scalar to storage precision ``p`` and return it as a compute-dtype scalar."""
    return p.compute_dtype.type(p.dtype.type(value))


# --- software binary16 reference ---------------------------------------------
#
# Pure-integer conversions, independent of numpy's float16 machinery.  They are
# used to cross-check ``demote`` and are slow by design.

HALF_MAX = 65504.0
HALF_OVERFLOW = 65520.0
_QNAN16 = 0x7E00


def half_to_float(bits: int) -> float:
    """Decode a 16-bit pattern as a binary16 value."""
    bits &= 0xFFFF
    sign = -1.0 if bits & 0x8000 else 1.0
    exp = (bits >> 10) & 0x1F
    frac = bits & 0x3FF
    if exp == 0x1F:
        return sign * math.inf if frac == 0 else math.nan
    if exp == 0:
        return sign * math.ldexp(frac, -24)
    return sign * math.ldexp(1024 + frac, exp - 25)


def float_to_half(x: float) -> int:
    """Encode ``x`` as binary16 bits, rounding to nearest with ties to even."""
    if math.isnan(x):
        return _QNAN16
    sign = 0x8000 if math.copysign(1.0, x) < 0 else 0
    a = abs(x)
    if math.isinf(a):
        return sign | 0x7C00
    if a == 0:
        return sign
    _, e = math.frexp(a)
    exponent = e - 1  # 2**exponent <= a < 2**(exponent + 1)
    quantum = -24 if exponent < -14 else exponent - 10
    scaled = Fraction(a) / Fraction(2) ** quantum
    n = scaled.numerator // scaled.denominator
    rem = scaled - n
    if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and n % 2 == 1):
        n += 1
    if quantum == -24:
        # subnormal; n == 1024 lands exactly on the smallest normal encoding
        return sign | n
    if n == 2048:
        n = 1024
        exponent += 1
    if exponent > 15:
        return sign | 0x7C00
    return sign | ((exponent + 15) << 10) | (n - 1024)
