"""Host reference for binary32 arithmetic, independent of the soft FPU.

Values come from numpy's float32 arithmetic (IEEE round-to-nearest-even on
every supported host).  Exception flags are reconstructed from float64
arithmetic, which holds every binary32 sum, product and residual exactly
enough to decide inexactness and tininess:

* inexact: the float64 error-free transform (TwoSum, exact product, or the
  residual ``r*b - a`` / ``r*r - b``) is nonzero;
* underflow: the result is tiny after rounding (judged with the exponent
  range widened by 2**100) and inexact;
* overflow: an infinite result from finite operands, other than division by zero.
"""

from __future__ import annotations

import numpy as np

from .float_bits import as_words
from .nets import OpKind

INVALID, DIVIDE_BY_ZERO, OVERFLOW, UNDERFLOW, INEXACT = 1, 2, 4, 8, 16
TINY = np.float64(2.0 ** -126)
WIDEN = np.float64(2.0 ** 100)


def _f32(words):
    return as_words(words).astype(np.uint32).view(np.float32)


def _is_snan(words):
    return (((words >> 23) & 0xFF) == 0xFF) & ((words & 0x7FFFFF) != 0) & ((words & 0x400000) == 0)


def reference_batch(op, a, b):
    """Return ``(words, flags)`` int64 arrays for ``op`` applied element-wise.

    For ``sqrt`` the radicand is ``b``.  NaN results are normalised to the
    canonical quiet NaN so they compare directly against the soft FPU.
    """
    op = OpKind.parse(op)
    bw = as_words(b)
    aw = as_words(a) if op is not OpKind.SQRT else np.zeros_like(bw)
    fa, fb = _f32(aw), _f32(bw)
    with np.errstate(all="ignore"):
        da, db = fa.astype(np.float64), fb.astype(np.float64)
        if op is OpKind.ADD:
            r = fa + fb
        elif op is OpKind.SUB:
            r = fa - fb
        elif op is OpKind.MUL:
            r = fa * fb
        elif op is OpKind.DIV:
            r = fa / fb
        else:
            r = np.sqrt(fb)
        dr = r.astype(np.float64)

        # residual between the exact result and the rounded one
        if op in (OpKind.ADD, OpKind.SUB):
            db = -db if op is OpKind.SUB else db
            s = da + db
            bv = s - da                                  # TwoSum: s + err is exact
            err = (da - (s - bv)) + (db - bv)
            inexact = (s != dr) | (err != 0)
            exact = s
        elif op is OpKind.MUL:
            exact = da * db                              # 48-bit product: exact
            inexact = exact != dr
        elif op is OpKind.DIV:
            # r*b is exact in float64; equal to a iff the quotient is exact
            inexact = dr * db != da
            exact = da / db
        else:
            inexact = dr * dr != db
            exact = np.sqrt(db)

        finite_in = np.isfinite(fb) & (np.isfinite(fa) | (op is OpKind.SQRT))
        nan_in = np.isnan(fb) | (np.isnan(fa) if op is not OpKind.SQRT else False)
        inexact &= finite_in & np.isfinite(r)

        divzero = np.zeros(r.shape, dtype=bool)
        if op is OpKind.DIV:
            divzero = np.isfinite(fa) & (fa != 0) & (fb == 0)
        overflow = finite_in & np.isinf(r) & ~divzero
        inexact |= overflow

        # tiny after rounding: round the exact value to 24 bits with an unbounded exponent
        widened = (exact * WIDEN).astype(np.float32).astype(np.float64)
        tiny = (np.abs(widened) < TINY * WIDEN) & (exact != 0)
        underflow = tiny & inexact & finite_in

    invalid = (np.isnan(r) & ~nan_in) | _is_snan(bw)
    if op is not OpKind.SQRT:
        invalid |= _is_snan(aw)

    flags = (np.where(invalid, INVALID, 0) | np.where(divzero, DIVIDE_BY_ZERO, 0)
             | np.where(overflow, OVERFLOW, 0) | np.where(underflow, UNDERFLOW, 0)
             | np.where(inexact, INEXACT, 0)).astype(np.int64)
    words = r.view(np.uint32).astype(np.int64)
    words = np.where(np.isnan(r), 0x7FC00000, words)
    return words, flags
