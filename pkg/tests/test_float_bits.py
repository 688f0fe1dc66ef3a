from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given

from rpcfpu.float_bits import (OperandClass, PackedFloat32, ReducedFloat, classify,
                               classify_array, exact_value, float_to_word, format_hex,
                               mantissa_parts, pack, parse_hex, split_fields,
                               truncate_to_reduced, unpack)

from strategies import ks, normals, words


def test_unpack_examples():
    one = unpack(0x3F800000)
    assert (one.sign_bit, one.exp_bits, one.fraction) == (0, 127, 0)
    assert one.to_float() == 1.0
    neg = unpack(0xBF800000)
    assert (neg.sign_bit, neg.exp_bits, neg.fraction) == (1, 127, 0)
    pi = unpack(0x40490FDB)
    assert (pi.sign_bit, pi.exp_bits, pi.fraction) == (0, 128, 0x490FDB)
    # independent decoder: the host's float32 conversion
    assert float_to_word(float(np.float32(np.pi))) == 0x40490FDB


def test_pack_examples_and_range_errors():
    assert pack(0, 127, 0) == 0x3F800000
    assert pack(1, 0, 0) == 0x80000000
    assert pack(0, 128, 0x490FDB) == 0x40490FDB
    for bad in [(2, 0, 0), (0, 256, 0), (0, 0, 1 << 23), (-1, 0, 0)]:
        with pytest.raises(ValueError):
            pack(*bad)


@given(words)
def test_unpack_pack_round_trip(w):
    x = unpack(w)
    assert pack(x.sign_bit, x.exp_bits, x.fraction) == w


def test_round_trip_every_field_value():
    # every fraction under a spread of sign/exponent fields, and every sign/exponent pair
    frac = np.arange(1 << 23, dtype=np.int64)
    for top in (0x000, 0x001, 0x07F, 0x0FE, 0x0FF, 0x100, 0x17F, 0x1FF):
        w = (np.int64(top) << 23) | frac
        s, e, f = split_fields(w)
        assert np.array_equal((s << 31) | (e << 23) | f, w)
    se = np.arange(512, dtype=np.int64)[:, None]
    w = ((se << 23) | np.array([0, 1, 0x2AAAAA, 0x555555, 0x7FFFFF])).ravel()
    s, e, f = split_fields(w)
    assert np.array_equal((s << 31) | (e << 23) | f, w)


def test_truncate_examples():
    assert truncate_to_reduced(unpack(0x3F800000), 7).fraction_k == 0
    r = truncate_to_reduced(unpack(pack(0, 127, 0x7FFFFF)), 7)
    assert r.fraction_k == 0x7F and r.exp_bits == 127 and r.k == 7
    assert truncate_to_reduced(unpack(pack(1, 130, 0x00FFFF)), 7).fraction_k == 0
    assert truncate_to_reduced(unpack(pack(1, 130, 0x00FFFF)), 7).sign_bit == 1
    with pytest.raises(ValueError):
        truncate_to_reduced(unpack(0), 7)
    with pytest.raises(ValueError):
        truncate_to_reduced(unpack(0x3F800000), 0)


def test_classify_examples():
    assert classify(unpack(0x00000000)) is OperandClass.ZERO
    assert classify(unpack(0x80000000)) is OperandClass.ZERO
    assert classify(unpack(0x7F800000)) is OperandClass.INFINITY
    assert classify(unpack(0x00000001)) is OperandClass.DENORM
    assert classify(unpack(0x7FC00000)) is OperandClass.NAN
    assert classify(unpack(0x3F800000)) is OperandClass.NORMAL


@given(words)
def test_classify_array_matches_scalar(w):
    assert classify_array(np.array([w]))[0] is classify(unpack(w))


def test_mantissa_parts_examples():
    m, mh, ml = mantissa_parts(unpack(pack(0, 127, 0x7FFFFF)), 7)
    assert ml == Fraction(1, 2 ** 7) - Fraction(1, 2 ** 23)
    assert mh == 2 - Fraction(1, 2 ** 7)
    assert mantissa_parts(unpack(0x3F800000), 5) == (1, 1, 0)
    assert mantissa_parts(unpack(pack(0, 127, 0x400000)), 1) == (Fraction(3, 2), Fraction(3, 2), 0)


@given(normals(), ks)
def test_mantissa_axioms(w, k):
    m, mh, ml = mantissa_parts(unpack(w), k)
    u, eps = Fraction(1, 2 ** k), Fraction(1, 2 ** 23)
    assert 1 <= m <= 2 - eps
    assert 1 <= mh <= 2 - u
    assert 0 <= ml <= u - eps
    assert mh + ml == m
    assert ReducedFloat(k, 0, 127, truncate_to_reduced(unpack(w), k).fraction_k).mantissa == mh


@given(normals())
def test_exact_value_matches_host_float(w):
    assert exact_value(unpack(w)) == Fraction(PackedFloat32(w).to_float())


def test_hex_forms():
    assert format_hex(0x3F800000) == "0x3F800000"
    assert parse_hex("0x3f800000") == parse_hex("3F800000") == 0x3F800000
    for bad in ["", "0x", "0x123456789", "xyz", "0x12 34"]:
        with pytest.raises(ValueError):
            parse_hex(bad)


def test_reduced_float_validation():
    with pytest.raises(ValueError):
        ReducedFloat(7, 0, 127, 1 << 7)
    with pytest.raises(ValueError):
        ReducedFloat(24, 0, 127, 0)
    assert ReducedFloat(3, 0, 128, 0b101).magnitude_bits == (128 << 3) | 0b101
