from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpcfpu.corpus import class_operands
from rpcfpu.float_bits import pack, unpack
from rpcfpu.nets import OpKind
from rpcfpu.oracle import (CLAIMED_IMPOSSIBLE, ROUNDING_COMBOS, ExponentCase, classify_rounding_cases,
                           combo_codes, exact_result, gen_corner_add, gen_corner_mul,
                           mul_corner_pattern, mul_int_model, rational_from_json, rational_json,
                           search_diff4_mul, term_intervals, trace, verify_term_bounds)
from rpcfpu.rpc_check import CLASS_INDEX, CLASS_LIST, ST_OK, ST_SUP, CheckClass, check_batch
from rpcfpu.softfpu import fpu_batch, fpu_op

from strategies import normals

U = lambda k: Fraction(1, 2 ** k)          # noqa: E731
EPS = Fraction(1, 2 ** 23)


def _live(cls, k, n, seed):
    op, a, b = class_operands(cls, np.random.default_rng([seed, k, CLASS_INDEX[cls]]), n)
    r = fpu_batch(op, a, b)
    v = check_batch(op, a, b, r.words, r.flags, k)
    keep = v.status != ST_SUP
    return op, a[keep], b[keep], v.diff[keep]


def test_trace_power_of_two_mul():
    t = trace(OpKind.MUL, 0x40800000, 0x3E000000, 7)                     # 4 * 0.125
    assert t.m_star == 0 and all(v == 0 for v in t.m_low_terms.values())
    assert t.diff_predicted == 0 and t.identity_holds


def test_trace_all_ones_fractions_mul():
    w = pack(0, 127, 0x7FFFFF)
    t = trace(OpKind.MUL, w, w, 7)
    assert 0 < t.m_star <= 4 * (U(7) - EPS)
    mh, ml = 2 - U(7), U(7) - EPS
    assert t.m_star == 2 * mh * ml + ml * ml


def test_trace_equal_exponent_ssadd_is_case_two():
    t = trace(OpKind.ADD, pack(0, 130, 0x123456), pack(0, 130, 0x654321), 7)
    assert t.cls is CheckClass.SSADD and t.exponent_case is ExponentCase.COMMON_2


def test_trace_rejects_non_standard():
    with pytest.raises(ValueError):
        trace(OpKind.ADD, 1, 0x3F800000, 7)
    with pytest.raises(ValueError):
        trace(OpKind.SUB, 0x3F800000, 0x3F800000, 7)
    with pytest.raises(ValueError):
        trace(OpKind.MUL, 0x3F800000, 0x3F800000, 0)


@given(st.sampled_from([o for o in OpKind if o is not OpKind.SQRT]), normals(60, 190),
       normals(60, 190))
def test_exact_result_rounds_like_the_fpu(op, a, b):
    r = fpu_op(op, a, b)
    if r.flags & 0b1111 or r.value.exp_bits == 0 or (r.word & 0x7FFFFFFF) == 0:
        return
    exact, word = exact_result(op, unpack(a), unpack(b))
    assert word == r.word


@pytest.mark.parametrize("cls", CLASS_LIST)
@pytest.mark.parametrize("k", [1, 4, 7, 16, 23])
def test_terms_within_bounds_and_match_datapath(cls, k):
    op, a, b, diff = _live(cls, k, 400, 1)
    for i in range(len(a)):
        t = trace(op, int(a[i]), int(b[i]), k)
        rep = verify_term_bounds(t)
        assert rep.ok, [c.describe() for c in rep.violations]
        assert t.diff_predicted == diff[i]
        assert abs(t.delta_checker) <= U(k + 1)
        if t.delta_full is not None:
            assert abs(t.delta_full) <= EPS / 2
        # checker rounding ties only land on even significands
        if abs(t.delta_checker) == U(k + 1):
            assert (t.checker_mantissa * 2 ** k).numerator % 2 == 0
        d = t.exponents["ref"] - t.exponents["checker"]
        assert -1 <= d <= 1


@pytest.mark.parametrize("case", [ExponentCase.COMMON_1, ExponentCase.COMMON_2])
def test_interval_table(case):
    k = 7
    mul = term_intervals("mul", case, k)
    assert mul["<1>"][1] == (4 if case is ExponentCase.COMMON_1 else 2) * (U(k) - EPS)
    assert mul["<2>"][:2] == (-U(k) + EPS, 0)
    div = term_intervals("div", ExponentCase.COMMON_1, k)["<3>"]
    assert div == (-(U(k) / 2 + EPS), U(k) / 2 + EPS, True, True)


def test_mul_case_two_first_term_bound():
    op, a, b, _ = _live(CheckClass.MUL, 7, 3000, 2)
    seen = 0
    for i in range(len(a)):
        t = trace(op, int(a[i]), int(b[i]), 7)
        if t.exponent_case is ExponentCase.COMMON_2:
            seen += 1
            assert 0 <= t.terms[0] <= 2 * (U(7) - EPS)
            assert -1 <= t.diff_predicted <= 2
    assert seen > 100


@pytest.mark.parametrize("op,a,b,k", [
    (OpKind.SUB, 0x4D1B80EB, 0x4C1D05FF, 2),
    (OpKind.ADD, 0xACA0488D, 0x2BC14667, 2),
    (OpKind.SUB, 0x158C7E47, 0x168F58BD, 3),
])
def test_reverse_add_case_two_tie_reaches_closed_bound(op, a, b, k):
    t = trace(op, a, b, k)
    assert t.kind == "add_rev" and t.exponent_case is ExponentCase.COMMON_2
    assert abs(t.terms[2]) == U(k) / 2 + EPS / 4
    assert verify_term_bounds(t).ok


@pytest.mark.parametrize("op,a,b,k", [
    (OpKind.ADD, 0xDE000000, 0xDDFF9C58, 4),
    (OpKind.SUB, 0x4D7FFFFD, 0x4D0007B8, 4),
    (OpKind.MUL, 0xD12A3B9F, 0xAFC068BF, 4),
    (OpKind.DIV, 0xA5FFFFFE, 0x36E1F446, 4),
    (OpKind.SQRT, 0, 0x38FFFEA9, 7),
])
def test_checker_carry_stays_in_bounds(op, a, b, k):
    t = trace(op, a, b, k)
    assert t.exponent_case is ExponentCase.CHECKER_CARRY
    assert t.exponents["checker"] == t.exponents["ref"] + 1
    assert t.diff_predicted == -1 and verify_term_bounds(t).ok


def test_rational_json_round_trip():
    for x in (Fraction(3, 8), Fraction(-5, 3), Fraction(0), Fraction(7), None):
        assert rational_from_json(rational_json(x)) == x
    assert rational_json(Fraction(3, 8)) == {"num": 3, "den_exp": 3}
    t = trace(OpKind.DIV, 0x40490FDB, 0x3FB504F3, 9)
    d = t.to_dict()
    assert rational_from_json(d["m_star"]) == t.m_star
    assert [rational_from_json(x) for x in d["terms"]] == list(t.terms)


@pytest.mark.parametrize("k", [4, 7, 12])
def test_gen_corner_add(k):
    rep = gen_corner_add(k, seed=1)
    assert rep.hits >= 1000 and rep.deviations() == 0
    assert np.all(rep.diff == 1) and np.all(rep.status == ST_OK)
    for op, a, b in list(rep.pairs())[:50]:
        t = trace(op, a, b, k)
        assert t.exponent_case is ExponentCase.CORNER
        assert t.exponents["ref"] == t.exponents["checker"] + 1


@pytest.mark.parametrize("k", [4, 7, 12])
def test_gen_corner_mul_pattern_table(k):
    rep = gen_corner_mul(k, seed=1)
    assert rep.hits >= 1000 and rep.deviations() == 0
    table = rep.pattern_table()
    assert set(table) <= {("01", "11"), ("10", "10"), ("11", "01")}
    assert set(table[("01", "11")]) == {1}
    assert set(table[("10", "10")]) == {2}
    if ("11", "01") in table:
        assert set(table[("11", "01")]) == {3}
    assert not np.any(rep.ef == 3)
    for op, a, b in list(rep.pairs())[:30]:
        assert trace(op, a, b, k).exponent_case is ExponentCase.CORNER


def test_gen_corner_mul_needs_two_bits():
    with pytest.raises(ValueError):
        gen_corner_mul(1)


def test_mul_corner_pattern_predicts_datapath_diff():
    # recompute the two-bit patterns from raw result words and checker fractions
    rep = gen_corner_mul(5, seed=3, hits=50)
    r = fpu_batch(OpKind.MUL, rep.a, rep.b)
    v = check_batch(OpKind.MUL, rep.a, rep.b, r.words, r.flags, 5)
    ab, cd, ef, pd = mul_corner_pattern(r.words, v.out_mag & 31, 5)
    assert np.array_equal(pd, rep.diff) and np.array_equal(ab, rep.ab)


def test_rounding_cases_examples():
    t = trace(OpKind.MUL, 0x40000000, 0x3F800000, 7)
    assert classify_rounding_cases(t) == ("I", "III", "V")
    # 1.0000011 * 1.0100001 (k=7): product 164.77 checker ulps, rounded up to 165
    a, b = pack(0, 127, 0b0000011 << 16), pack(0, 127, 0b0100001 << 16)
    t = trace(OpKind.MUL, a, b, 7)
    assert t.checker_mantissa > t.checker_exact / 2 ** t.e_max
    assert classify_rounding_cases(t)[2] == "VI"
    with pytest.raises(ValueError):
        classify_rounding_cases(trace(OpKind.ADD, a, b, 7))


@given(st.integers(2, 23), st.integers(0, 2 ** 32 - 1))
def test_integer_model_matches_exact_classification(k, seed):
    rng = np.random.default_rng(seed)
    ma = (1 << 23) | rng.integers(0, 1 << 23, 8)
    mb = (1 << 23) | rng.integers(0, 1 << 23, 8)
    model = mul_int_model(ma, mb, k)
    codes = combo_codes(model)
    for i in range(8):
        a, b = int(ma[i] & 0x7FFFFF) | (127 << 23), int(mb[i] & 0x7FFFFF) | (127 << 23)
        t = trace(OpKind.MUL, a, b, k)
        assert t.diff_predicted == model["diff"][i]
        if model["common1"][i]:
            assert "-".join(classify_rounding_cases(t)) == ROUNDING_COMBOS[codes[i]]


@pytest.mark.parametrize("k", [4, 7])
def test_diff4_search_small_budget(k):
    rep = search_diff4_mul(k, 200000, seed=5)
    assert rep.ok and rep.max_diff <= 3 and rep.route_mismatches == 0
    assert rep.samples == 200000 and sum(rep.diff_histogram.values()) == rep.samples
    assert "diff=3" in rep.witnesses or k > 8
    for key, (a, b) in rep.witnesses.items():
        t = trace(OpKind.MUL, a, b, k)
        if key.startswith("diff="):
            assert t.diff_predicted == int(key[5:])
        else:
            assert "-".join(classify_rounding_cases(t)) == key[6:]


@pytest.mark.parametrize("a,b,combo", [
    (3380665960, 3415604070, "I-IV-V"),
    (1099844886, 1183678561, "II-III-V"),
])
def test_combinations_found_at_k7_are_genuine(a, b, combo):
    # exact-rational confirmation of rounding-case combinations observed by the search
    assert combo in CLAIMED_IMPOSSIBLE
    t = trace(OpKind.MUL, a, b, 7)
    assert t.exponent_case is ExponentCase.COMMON_1
    assert "-".join(classify_rounding_cases(t)) == combo
    assert -1 <= t.diff_predicted <= 3
