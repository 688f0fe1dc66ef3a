from __future__ import annotations

import itertools
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpcfpu.corpus import class_operands
from rpcfpu.float_bits import ReducedFloat, mantissa_parts, pack, truncate_to_reduced, unpack
from rpcfpu.checker import rpc_mul
from rpcfpu.nets import FaultSpec, OpKind
from rpcfpu.rpc_check import (ADD_CLASSES, CLASS_INDEX, CLASS_LIST, REVERSE_CLASSES, ST_OK,
                              ST_SUP, CheckClass, Status, SuppressionReason, bounds_for, check,
                              check_batch, classify_check, compute_diff, list_checker_sites)
from rpcfpu.softfpu import fpu_batch, fpu_op, list_fault_sites

from checker_oracle import rne_k
from strategies import ks, normals

VERDICT_KEYS = {"op", "k", "class", "status", "diff", "sign_match", "suppression_reason"}


def _p(w):
    return unpack(w)


def test_dispatch_examples():
    one, two, three = 0x3F800000, 0x40000000, 0x40400000
    cls, plan = classify_check(OpKind.SUB, _p(three), _p(one), _p(two))
    assert cls is CheckClass.SSSUB
    assert (plan.engine, plan.x, plan.y, plan.reference, plan.subtract) == \
        ("chk.adder", "C", "B", "A", False)
    cls, plan = classify_check(OpKind.ADD, _p(one), _p(two), _p(three))
    assert cls is CheckClass.SSADD and not plan.reverse and plan.reference == "C"
    # +1 + (-3) = -2: signs (+,-,-)
    cls, plan = classify_check(OpKind.ADD, _p(one), _p(three | 1 << 31), _p(two | 1 << 31))
    assert cls is CheckClass.DSADD
    assert (plan.x, plan.y, plan.reference, plan.subtract) == ("C", "A", "B", True)


def test_dispatch_is_total():
    # every op and sign pattern on standard operands maps to exactly one plan
    expect = {
        (OpKind.ADD, 0, 0, 0): ("SSADD", "A", "B", "C"), (OpKind.SUB, 0, 1, 0): ("DSSUB", "A", "B", "C"),
        (OpKind.SUB, 0, 0, 0): ("SSSUB", "C", "B", "A"), (OpKind.SUB, 0, 0, 1): ("SSSUB", "A", "C", "B"),
        (OpKind.ADD, 0, 1, 0): ("DSADD", "C", "B", "A"), (OpKind.ADD, 0, 1, 1): ("DSADD", "C", "A", "B"),
    }
    for op, sa, sb, sc in itertools.product(OpKind, (0, 1), (0, 1), (0, 1)):
        a, b, c = pack(sa, 128, 1), pack(sb, 127, 3), pack(sc, 126, 5)
        cls, plan = classify_check(op, _p(a), _p(b), _p(c))
        assert plan.engine == ("chk.adder" if cls in ADD_CLASSES else "chk.mult")
        assert plan.reverse == (cls in REVERSE_CLASSES)
        # sign symmetry: flipping every sign keeps the plan
        key = (op, 0, sb ^ sa, sc ^ sa)
        if key in expect:
            name, x, y, ref = expect[key]
            assert (cls.value, plan.x, plan.y, plan.reference) == (name, x, y, ref)
    assert classify_check(OpKind.MUL, _p(0x3F800000), _p(0x3F800000), _p(0x3F800000))[1].reference == "C"
    assert classify_check(OpKind.DIV, _p(0x3F800000), _p(0x3F800000), _p(0x3F800000))[1].describe() \
        == "C^H x B^H -> A' vs A^H"
    assert classify_check(OpKind.SQRT, None, _p(0x3F800000), _p(0x3F800000))[1].describe() \
        == "C^H x C^H -> B' vs B^H"


def test_compute_diff_examples():
    x = ReducedFloat(5, 0, 130, 17)
    assert compute_diff(x, x) == 0
    assert compute_diff(ReducedFloat(5, 0, 128, 0), ReducedFloat(5, 0, 127, 31)) == 1
    assert compute_diff(ReducedFloat(5, 0, 128, 3), ReducedFloat(5, 0, 128, 4)) == -1
    with pytest.raises(ValueError):
        compute_diff(ReducedFloat(5, 0, 128, 3), ReducedFloat(6, 0, 128, 3))


@given(normals(), normals(), ks)
def test_compute_diff_is_scaled_mantissa_gap_for_equal_exponents(a, b, k):
    b = (b & ~(0xFF << 23)) | (a & (0xFF << 23))
    ra, rb = truncate_to_reduced(_p(a), k), truncate_to_reduced(_p(b), k)
    _, mha, _ = mantissa_parts(_p(a), k)
    _, mhb, _ = mantissa_parts(_p(b), k)
    assert compute_diff(ra, rb) == (mha - mhb) * 2 ** k


def test_bounds_for():
    for cls in CLASS_LIST:
        b = bounds_for(cls)
        assert (b.lb, b.ub) == ((-1, 1) if cls in ADD_CLASSES else (-1, 3))
        assert b.contains(b.lb) and b.contains(b.ub) and not b.contains(b.ub + 1)


def test_check_examples():
    one = 0x3F800000
    v = check(OpKind.MUL, _p(one), _p(one), fpu_op(OpKind.MUL, one, one), 7)
    assert v.status is Status.NO_ERROR and v.diff == 0 and v.sign_match
    neg = 0xBF800000
    v = check(OpKind.SQRT, None, _p(neg), fpu_op(OpKind.SQRT, 0, neg), 7)
    assert v.status is Status.SUPPRESSED and v.diff is None
    assert v.suppression_reason is SuppressionReason.EXCEPTION
    x = 0x40490FDB
    v = check(OpKind.SUB, _p(x), _p(x), fpu_op(OpKind.SUB, x, x), 7)
    assert v.suppression_reason is SuppressionReason.ZERO_RESULT
    v = check(OpKind.ADD, _p(1), _p(one), fpu_op(OpKind.ADD, 1, one), 7)
    assert v.suppression_reason is SuppressionReason.NON_STANDARD_OPERAND


def test_checker_range_exit_is_suppressed():
    a, b, k = 0x5F10FC31, 0x5FE05B74, 4
    res = fpu_op(OpKind.MUL, a, b)
    assert res.value.exp_bits == 254
    # independent: the truncated product rounded to k bits reaches 2^128
    _, mha, _ = mantissa_parts(_p(a), k)
    _, mhb, _ = mantissa_parts(_p(b), k)
    assert rne_k(mha * mhb * Fraction(2) ** (_p(a).exponent + _p(b).exponent), k) == Fraction(2) ** 128
    v = check(OpKind.MUL, _p(a), _p(b), res, k)
    assert v.suppression_reason is SuppressionReason.CHECKER_RANGE_EXIT


def test_flipping_top_result_fraction_bit_is_detected():
    rng = np.random.default_rng(5)
    _, a, b = class_operands(CheckClass.MUL, rng, 200)
    site = next(s for s in list_fault_sites(OpKind.MUL) if s.label == "mult.result[22]")
    for sv in (0, 1):
        bad = fpu_batch(OpKind.MUL, a, b, [FaultSpec(site, sv)])
        v = check_batch(OpKind.MUL, a, b, bad.words, bad.flags, 7)
        changed = bad.words != fpu_batch(OpKind.MUL, a, b).words
        assert changed.any()
        assert np.all(v.status[changed] == 1)
        for i in np.flatnonzero(changed)[:20]:
            # Diff by definition: truncated faulty C against the checker product
            ref = truncate_to_reduced(_p(int(bad.words[i])), 7)
            out = rpc_mul(truncate_to_reduced(_p(int(a[i])), 7), truncate_to_reduced(_p(int(b[i])), 7))
            d = compute_diff(ref, out)
            assert d == v.diff[i] and abs(d) >= 2 ** 6 - 3


@pytest.mark.parametrize("cls", CLASS_LIST)
@pytest.mark.parametrize("k", [1, 4, 7, 12, 16, 23])
def test_fault_free_checks_pass(cls, k):
    rng = np.random.default_rng([CLASS_INDEX[cls], k])
    op, a, b = class_operands(cls, rng, 20000)
    r = fpu_batch(op, a, b)
    v = check_batch(op, a, b, r.words, r.flags, k)
    live = v.status != ST_SUP
    assert live.mean() > 0.5
    assert np.all(v.status[live] == ST_OK)
    assert np.all(v.sign_match[live])
    b_ = bounds_for(cls)
    d = v.diff[live & (v.cls == CLASS_INDEX[cls])]
    assert d.size and d.min() >= b_.lb and d.max() <= b_.ub


@given(st.sampled_from(CLASS_LIST), st.integers(0, 2 ** 32 - 1), ks)
def test_scalar_matches_batch_and_serialises(cls, seed, k):
    op, a, b = class_operands(cls, np.random.default_rng(seed), 1)
    r = fpu_op(op, int(a[0]), int(b[0]))
    v = check(op, _p(int(a[0])), _p(int(b[0])), r, k)
    vb = check_batch(op, a, b, [r.word], [int(r.flags)], k)
    assert vb.verdict(0) == v
    d = json.loads(v.to_json())
    assert set(d) == VERDICT_KEYS
    assert d["status"] in {"NoError", "ErrorDetected", "Suppressed"}
    assert (d["diff"] is None) == (d["status"] == "Suppressed")
    if d["status"] == "NoError":
        assert d["sign_match"] and bounds_for(cls).contains(d["diff"])


def test_checker_side_sites_cover_latches_and_comparator():
    for op in OpKind:
        labels = {s.net_name for s in list_checker_sites(op, 7)}
        assert {"chk.in_x", "chk.in_y", "chk.ref", "cmp.diff", "cmp.suppress", "cmp.error"} <= labels
    stuck_error = next(s for s in list_checker_sites(OpKind.MUL, 7) if s.label == "cmp.error[0]")
    one = 0x3F800000
    v = check(OpKind.MUL, _p(one), _p(one), fpu_op(OpKind.MUL, one, one), 7,
              [FaultSpec(stuck_error, 1)])
    assert v.status is Status.ERROR_DETECTED
