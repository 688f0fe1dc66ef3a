"""Operand generators: class-targeted random operands and a directed edge corpus."""

from __future__ import annotations

import itertools

import numpy as np

from .nets import OpKind
from .rpc_check import CheckClass

# op and (sign of a == sign of b) for each add/sub class
CLASS_OP = {
    CheckClass.SSADD: (OpKind.ADD, True),
    CheckClass.DSSUB: (OpKind.SUB, False),
    CheckClass.SSSUB: (OpKind.SUB, True),
    CheckClass.DSADD: (OpKind.ADD, False),
    CheckClass.MUL: (OpKind.MUL, None),
    CheckClass.DIV: (OpKind.DIV, None),
    CheckClass.SQRT: (OpKind.SQRT, None),
}


def _fractions(rng: np.random.Generator, n: int) -> np.ndarray:
    """Fractions mixing uniform bits with runs of ones/zeros at the top and bottom."""
    f = rng.integers(0, 1 << 23, n, dtype=np.int64)
    style = rng.integers(0, 6, n)
    top = rng.integers(1, 24, n)
    ones_top = ((1 << 23) - 1) ^ ((1 << (23 - top)) - 1)
    f = np.where(style == 1, f | ones_top, f)              # leading ones
    f = np.where(style == 2, f & ~ones_top, f)             # leading zeros
    f = np.where(style == 3, f | ((1 << rng.integers(0, 23, n)) - 1), f)   # trailing ones
    f = np.where(style == 4, (1 << 23) - 1 - rng.integers(0, 4, n), f)
    return f


def random_normals(rng: np.random.Generator, n: int, exp_lo: int = 1, exp_hi: int = 254,
                   sign=None) -> np.ndarray:
    e = rng.integers(exp_lo, exp_hi + 1, n, dtype=np.int64)
    s = rng.integers(0, 2, n, dtype=np.int64) if sign is None else np.asarray(sign, np.int64)
    return (s << 31) | (e << 23) | _fractions(rng, n)


def class_operands(cls: CheckClass, rng: np.random.Generator, n: int):
    """Random operands steering towards ``cls``: returns ``(op, a, b)`` word arrays.

    Exponents stay well inside the normal range; add/sub operand exponents are
    usually close so that alignment, cancellation and carry-out all occur.
    """
    cls = CheckClass(cls)
    op, same_sign = CLASS_OP[cls]
    if op is OpKind.SQRT:
        b = random_normals(rng, n, 1, 254, sign=np.zeros(n, np.int64))
        return op, np.zeros(n, np.int64), b
    if op in (OpKind.MUL, OpKind.DIV):
        a = random_normals(rng, n, 64, 190)
        b = random_normals(rng, n, 64, 190)
        return op, a, b
    a = random_normals(rng, n, 40, 214)
    gap = np.where(rng.random(n) < 0.8, rng.integers(0, 4, n), rng.integers(0, 40, n))
    gap = gap * np.where(rng.random(n) < 0.5, 1, -1)
    eb = np.clip(((a >> 23) & 0xFF) + gap, 1, 254)
    sa = (a >> 31) & 1
    sb = sa if same_sign else 1 - sa
    b = random_normals(rng, n, sign=sb)
    b = (b & ~(0xFF << 23)) | (eb << 23)
    # occasionally make b a small perturbation of a to force deep cancellation
    near = rng.random(n) < 0.1
    fb = np.clip((a & 0x7FFFFF) + rng.integers(-3, 4, n), 0, (1 << 23) - 1)
    b = np.where(near, (sb << 31) | (a & (0xFF << 23)) | fb, b)
    return op, a, b


def uniform_words(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, 1 << 32, n, dtype=np.int64)


def edge_words() -> np.ndarray:
    """±0, ±min/max denormal, ±min/max normal, ±Inf, quiet and signalling NaNs,
    powers of two, all-ones fractions and values around 1."""
    mags = [0x00000000, 0x00000001, 0x00000002, 0x007FFFFF, 0x00400000,
            0x00800000, 0x00800001, 0x00FFFFFF, 0x7F7FFFFF, 0x7F7FFFFE, 0x7F000000,
            0x7F800000, 0x7FC00000, 0x7FC00001, 0x7F800001, 0x7FBFFFFF,
            0x3F800000, 0x3F800001, 0x3F7FFFFF, 0x3FFFFFFF, 0x3FC00000, 0x40000000,
            0x40490FDB, 0x33800000, 0x34000000, 0x4B800000, 0x4B7FFFFF,
            0x1F800000, 0x5F800000, 0x0C000000, 0x72FFFFFF, 0x20000000, 0x5E800000]
    mags += [e << 23 for e in (1, 2, 24, 25, 63, 64, 126, 127, 128, 190, 191, 253, 254)]
    mags += [(e << 23) | 0x7FFFFF for e in (1, 2, 103, 104, 126, 127, 152, 253, 254)]
    out = sorted(set(mags))
    return np.array(out + [m | 0x80000000 for m in out], dtype=np.int64)


def edge_pairs() -> tuple[np.ndarray, np.ndarray]:
    """Every ordered pair of edge words."""
    w = edge_words()
    pairs = np.array(list(itertools.product(w, w)), dtype=np.int64)
    return pairs[:, 0], pairs[:, 1]


def fpu_operands(op, rng: np.random.Generator, n: int):
    """Mix for FPU conformance: uniform bit patterns, close-exponent pairs and
    operands near the overflow/underflow thresholds."""
    op = OpKind.parse(op)
    a, b = uniform_words(rng, n), uniform_words(rng, n)
    part = rng.integers(0, 4, n)
    ea = rng.choice(np.array([0, 1, 2, 20, 60, 100, 127, 160, 200, 230, 253, 254, 255]), n)
    a = np.where(part == 1, (a & 0x807FFFFF) | (ea << 23), a)
    close = np.clip(((a >> 23) & 0xFF) + rng.integers(-2, 3, n), 0, 255)
    b = np.where(part == 2, (b & 0x807FFFFF) | (close << 23), b)
    if op in (OpKind.MUL, OpKind.DIV):
        # result exponents straddling the overflow and underflow limits
        lim = np.where(rng.random(n) < 0.5, 254, 1) + rng.integers(-30, 30, n)
        ea_f = (a >> 23) & 0xFF
        eb = lim - ea_f + 127 if op is OpKind.MUL else ea_f + 127 - lim
        b = np.where(part == 3, (b & 0x807FFFFF) | (np.clip(eb, 0, 255) << 23), b)
    return a, b
