import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nestkrylov.precision import (
    HALF_MAX,
    HALF_OVERFLOW,
    Precision,
    compute_precision,
    demote,
    float_to_half,
    half_to_float,
    promote,
    round_scalar,
)

P16, P32, P64 = Precision.P16, Precision.P32, Precision.P64
ALL_BITS = np.arange(65536, dtype=np.uint32).astype(np.uint16)


def bits_of(h):
    return int(np.float16(h).view(np.uint16))


def test_demote_examples():
    assert bits_of(demote(1.0, P16)) == 0x3C00
    z = demote(0.0, P16)
    assert z == 0 and not math.copysign(1.0, float(z)) < 0


def test_demote_one_over_26():
    exact = 1 / 26
    h = float(demote(exact, P16))
    assert abs(h - exact) <= 2**-10 * exact
    # both candidate neighbours, enumerated from the software encoder
    below = float_to_half(exact) & 0x7FFF
    neighbours = [half_to_float(below - 1), half_to_float(below), half_to_float(below + 1)]
    assert h == min(neighbours, key=lambda v: abs(v - exact))


@pytest.mark.parametrize("a,b,want", [(P16, P32, P32), (P64, P64, P64), (P16, P16, P16), (P64, P16, P64)])
def test_compute_precision(a, b, want):
    assert compute_precision(a, b) is want


def test_parse_aliases():
    assert Precision.parse("fp16") is P16
    assert Precision.parse("f32") is P32
    assert Precision.parse("double") is P64
    with pytest.raises(ValueError):
        Precision.parse("f8")


def test_decode_matches_reference_exhaustively():
    ours = ALL_BITS.view(np.float16).astype(np.float64)
    ref = np.array([half_to_float(int(b)) for b in range(65536)])
    nan = np.isnan(ref)
    assert np.array_equal(np.isnan(ours), nan)
    assert np.array_equal(ours[~nan], ref[~nan])
    # signed zeros
    assert np.array_equal(np.signbit(ours[~nan]), np.signbit(ref[~nan]))


def test_round_trip_all_finite_patterns():
    h = ALL_BITS.view(np.float16)
    finite = np.isfinite(h)
    back = demote(promote(h[finite], P64), P16).view(np.uint16)
    assert np.array_equal(back, ALL_BITS[finite])
    back32 = demote(promote(h[finite], P32), P16).view(np.uint16)
    assert np.array_equal(back32, ALL_BITS[finite])


def test_rounding_at_every_midpoint():
    # midpoints between consecutive positive finite halves, plus points just off them
    pos = ALL_BITS[:0x7C00].view(np.float16).astype(np.float64)
    mids = (pos[:-1] + pos[1:]) / 2
    for probe in (mids, np.nextafter(mids, 0), np.nextafter(mids, np.inf)):
        ours = demote(probe, P16).view(np.uint16)
        ref = np.array([float_to_half(float(x)) for x in probe], dtype=np.uint16)
        assert np.array_equal(ours, ref)


def test_overflow_boundary():
    assert float(demote(HALF_MAX, P16)) == HALF_MAX
    assert float(demote(np.nextafter(HALF_OVERFLOW, 0), P16)) == HALF_MAX
    assert math.isinf(float(demote(HALF_OVERFLOW, P16)))
    assert float_to_half(HALF_OVERFLOW) == 0x7C00
    assert float_to_half(-1e9) == 0xFC00
    assert float_to_half(math.nan) == 0x7E00


def test_subnormals():
    tiny = 2.0**-24
    assert bits_of(demote(tiny, P16)) == 0x0001
    assert bits_of(demote(tiny / 2, P16)) == 0x0000  # tie to even
    assert bits_of(demote(tiny * 1.5, P16)) == 0x0002  # tie to even
    assert float_to_half(tiny * 1.5) == 0x0002


@given(st.floats(allow_nan=False, allow_infinity=True, width=64))
def test_demote_matches_reference(x):
    assert bits_of(demote(x, P16)) == float_to_half(x)


@given(st.floats(min_value=-6e4, max_value=6e4), st.floats(min_value=-6e4, max_value=6e4))
def test_demote_monotone(x, y):
    if x <= y:
        assert float(demote(x, P16)) <= float(demote(y, P16))


@given(st.floats(min_value=2.0**-14, max_value=HALF_MAX))
def test_relative_error_bounded(x):
    assert abs(float(demote(x, P16)) - x) <= P16.unit_roundoff * x


def test_round_scalar_widens():
    v = round_scalar(0.1, P16)
    assert v.dtype == np.float32
    assert v == np.float32(np.float16(0.1))
