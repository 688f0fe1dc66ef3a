"""Bit-exact binary32 FPU (round-to-nearest-even) with injectable datapath nets.

The batch functions operate on int64 arrays of words and are what the
verification sweeps and fault campaigns drive.  ``fpu_add`` and friends are
scalar conveniences returning :class:`FpuResult`.

Special operands are resolved by a small exception unit whose 2-bit select
line (``<unit>.exc_sel``) chooses between the computed result (0), a signed
zero (1), a signed infinity (2) and the canonical quiet NaN (3).  NaN results
are always ``0x7FC00000``; payloads are not propagated.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from . import datapath as dp
from .float_bits import CANONICAL_NAN, POS_INF, PackedFloat32, as_words
from .nets import ALL_OPS, FaultSite, FaultSpec, Net, OpKind, Wires, sites_of

P = 23
FRAC_MASK = (1 << P) - 1
HIDDEN = 1 << P


class FpuFlag(enum.IntFlag):
    INVALID = 1
    DIVIDE_BY_ZERO = 2
    OVERFLOW = 4
    UNDERFLOW = 8
    INEXACT = 16


SUPPRESSING_FLAGS = FpuFlag.INVALID | FpuFlag.DIVIDE_BY_ZERO | FpuFlag.OVERFLOW | FpuFlag.UNDERFLOW

SEL_COMPUTED, SEL_ZERO, SEL_INF, SEL_NAN = 0, 1, 2, 3


@dataclass(frozen=True)
class FpuResult:
    value: PackedFloat32
    flags: FpuFlag

    @property
    def word(self) -> int:
        return self.value.word


@dataclass
class FpuBatch:
    """Results of a batch of operations: words and flag bitmasks (both int64)."""

    words: np.ndarray
    flags: np.ndarray

    def __len__(self):
        return len(self.words)

    def __getitem__(self, i) -> FpuResult:
        return FpuResult(PackedFloat32(int(self.words[i])), FpuFlag(int(self.flags[i])))

    def take(self, idx) -> "FpuBatch":
        return FpuBatch(self.words[idx], self.flags[idx])


# -- net catalogue ------------------------------------------------------------

_UNIT = {OpKind.ADD: "adder", OpKind.SUB: "adder", OpKind.MUL: "mult",
         OpKind.DIV: "divider", OpKind.SQRT: "sqrt"}


def _frontend_nets(pre: str, ops, unary: bool) -> list[Net]:
    nets = [] if unary else [Net(f"{pre}.in_a", 32, ops)]
    return nets + [Net(f"{pre}.in_b", 32, ops)]


def _backend_nets(pre: str, ops) -> list[Net]:
    return [Net(f"{pre}.exc_sel", 2, ops), Net(f"{pre}.flags", 5, ops),
            Net(f"{pre}.result", 32, ops)]


@lru_cache(maxsize=None)
def _unit_nets(unit: str) -> tuple[Net, ...]:
    if unit == "adder":
        ops = frozenset({OpKind.ADD, OpKind.SUB})
        nets = _frontend_nets(unit, ops, False) + [Net("adder.b_sign", 1, ops)]
        nets += dp.adder_nets(unit, P, ops, "fpu", True)
    elif unit == "mult":
        ops = frozenset({OpKind.MUL})
        nets = _frontend_nets(unit, ops, False) + dp.multiplier_nets(unit, P, ops, "fpu", True)
    elif unit == "divider":
        ops = frozenset({OpKind.DIV})
        nets = _frontend_nets(unit, ops, False) + dp.divider_nets(unit, P, ops, "fpu")
    else:
        ops = frozenset({OpKind.SQRT})
        nets = _frontend_nets(unit, ops, True) + dp.sqrt_nets(unit, P, ops, "fpu")
    return tuple(nets + _backend_nets(unit, ops))


@lru_cache(maxsize=None)
def fpu_catalog(op: OpKind) -> dict[str, Net]:
    return {n.name: n for n in _unit_nets(_UNIT[OpKind.parse(op)])}


def fpu_nets(op: OpKind) -> list[Net]:
    return list(fpu_catalog(OpKind.parse(op)).values())


def list_fault_sites(op) -> list[FaultSite]:
    """Every injectable FPU bit used by ``op``, in datapath order (LSB first per net)."""
    return sites_of(fpu_nets(OpKind.parse(op)))


def all_fpu_nets() -> list[Net]:
    seen, out = set(), []
    for op in ALL_OPS:
        for n in fpu_nets(op):
            if n.name not in seen:
                seen.add(n.name)
                out.append(n)
    return out


# -- shared front/back end ----------------------------------------------------


def _operand(word):
    s = (word >> 31) & 1
    e = (word >> 23) & 0xFF
    f = word & FRAC_MASK
    zero = (e == 0) & (f == 0)
    inf = (e == 0xFF) & (f == 0)
    nan = (e == 0xFF) & (f != 0)
    snan = nan & ((f >> 22) == 0)
    sig = np.where(e != 0, f | HIDDEN, f)
    eff_e = np.maximum(e, 1)
    return s, eff_e, sig, zero, inf, nan, snan


def _finish(w: Wires, pre: str, sign, exp, rounded, zero, tiny, inexact,
            sel, special_sign, special_flags):
    overflow = ~zero & (exp >= dp.EXP_MAX)
    hidden = (rounded >> P) & 1
    field = np.where(hidden != 0, exp, 0)
    computed = np.where(overflow, (sign << 31) | POS_INF,
                        (sign << 31) | (field << 23) | (rounded & FRAC_MASK))
    computed = np.where(zero, sign << 31, computed)
    inexact = ~zero & (inexact | overflow)
    cflags = (np.where(overflow, int(FpuFlag.OVERFLOW), 0)
              | np.where(tiny & inexact, int(FpuFlag.UNDERFLOW), 0)
              | np.where(inexact, int(FpuFlag.INEXACT), 0))

    sel = w(f"{pre}.exc_sel", sel)
    word = np.select(
        [sel == SEL_COMPUTED, sel == SEL_ZERO, sel == SEL_INF],
        [computed, special_sign << 31, (special_sign << 31) | POS_INF],
        CANONICAL_NAN)
    flags = w(f"{pre}.flags", np.where(sel == SEL_COMPUTED, cflags, special_flags))
    word = w(f"{pre}.result", word)
    return FpuBatch(word, flags)


def _sel(nan, inf, zero=None):
    sel = np.where(nan, SEL_NAN, np.where(inf, SEL_INF, SEL_COMPUTED))
    if zero is not None:
        sel = np.where(~nan & ~inf & zero, SEL_ZERO, sel)
    return sel.astype(np.int64)


# -- operations ---------------------------------------------------------------


def _add_sub(w: Wires, a, b, subtract: bool) -> FpuBatch:
    a = w("adder.in_a", a)
    b = w("adder.in_b", b)
    sa, ea, siga, za, ia, na, sna = _operand(a)
    sb, eb, sigb, zb, ib, nb, snb = _operand(b)
    sb = w("adder.b_sign", sb ^ int(subtract))

    sign, exp, total, pos = dp.adder_core(w, "adder", sa, ea, siga, sb, eb, sigb, P)
    exp, rounded, zero, tiny, inexact = dp.normalize_round(
        w, "adder", exp, total, 0, P, pos, True)
    # exact zero sum is +0 in round-to-nearest unless both addends are -0
    sign = np.where(zero, sa & sb, sign)

    inf_clash = ia & ib & (sa != sb)
    nan = na | nb | inf_clash
    invalid = sna | snb | inf_clash
    inf = ~nan & (ia | ib)
    sel = _sel(nan, inf)
    special_sign = np.where(ia, sa, sb)
    sflags = np.where(invalid, int(FpuFlag.INVALID), 0)
    return _finish(w, "adder", sign, exp, rounded, zero, tiny, inexact, sel,
                   special_sign, sflags)


def _mul(w: Wires, a, b) -> FpuBatch:
    a = w("mult.in_a", a)
    b = w("mult.in_b", b)
    sa, ea, siga, za, ia, na, sna = _operand(a)
    sb, eb, sigb, zb, ib, nb, snb = _operand(b)
    sign, exp, prod, pos = dp.multiplier_core(w, "mult", sa, ea, siga, sb, eb, sigb, P)
    exp, rounded, zero, tiny, inexact = dp.normalize_round(
        w, "mult", exp, prod, 0, P, pos, True)

    inf_zero = (ia & zb) | (za & ib)
    nan = na | nb | inf_zero
    invalid = sna | snb | inf_zero
    sel = _sel(nan, ia | ib, za | zb)
    sflags = np.where(invalid, int(FpuFlag.INVALID), 0)
    return _finish(w, "mult", sign, exp, rounded, zero, tiny, inexact, sel, sign, sflags)


def _div(w: Wires, a, b) -> FpuBatch:
    a = w("divider.in_a", a)
    b = w("divider.in_b", b)
    sa, ea, siga, za, ia, na, sna = _operand(a)
    sb, eb, sigb, zb, ib, nb, snb = _operand(b)
    sign, exp, quo, sticky, pos = dp.divider_core(w, "divider", sa, ea, siga, sb, eb, sigb, P)
    exp, rounded, zero, tiny, inexact = dp.normalize_round(
        w, "divider", exp, quo, sticky, P, pos, True)

    indeterminate = (ia & ib) | (za & zb)
    nan = na | nb | indeterminate
    invalid = sna | snb | indeterminate
    divzero = ~nan & zb & ~ia
    inf = ~nan & (ia | zb)
    sel = _sel(nan, inf, za | ib)
    sflags = (np.where(invalid, int(FpuFlag.INVALID), 0)
              | np.where(divzero, int(FpuFlag.DIVIDE_BY_ZERO), 0))
    return _finish(w, "divider", sign, exp, rounded, zero, tiny, inexact, sel, sign, sflags)


def _sqrt(w: Wires, b) -> FpuBatch:
    b = w("sqrt.in_b", b)
    sb, eb, sigb, zb, ib, nb, snb = _operand(b)
    exp, root, sticky, pos = dp.sqrt_core(w, "sqrt", eb, sigb, P)
    exp, rounded, zero, tiny, inexact = dp.normalize_round(
        w, "sqrt", exp, root, sticky, P, pos, True)

    negative = (sb == 1) & ~zb & ~nb
    nan = nb | negative
    invalid = snb | negative
    sel = _sel(nan, ib, zb)
    sflags = np.where(invalid, int(FpuFlag.INVALID), 0)
    return _finish(w, "sqrt", np.zeros_like(sb), exp, rounded, zero, tiny, inexact, sel,
                   sb, sflags)


def fpu_batch(op, a, b, faults: Iterable[FaultSpec] = ()) -> FpuBatch:
    """Run ``op`` element-wise over word arrays.  For ``sqrt`` the radicand is ``b``."""
    op = OpKind.parse(op)
    w = Wires(fpu_catalog(op), faults)
    b = as_words(b)
    if op is OpKind.SQRT:
        return _sqrt(w, b)
    a = as_words(a)
    if a.shape != b.shape:
        raise ValueError("operand arrays must have the same shape")
    if op is OpKind.ADD:
        return _add_sub(w, a, b, False)
    if op is OpKind.SUB:
        return _add_sub(w, a, b, True)
    if op is OpKind.MUL:
        return _mul(w, a, b)
    return _div(w, a, b)


def probe_nets(op, a, b, faults: Iterable[FaultSpec] = ()) -> dict[str, np.ndarray]:
    """Run one batch and return the last value driven on every net (debugging aid)."""
    op = OpKind.parse(op)
    w = Wires(fpu_catalog(op), faults)
    w.probe = {}
    b = as_words(b)
    if op is OpKind.SQRT:
        _sqrt(w, b)
    elif op in (OpKind.ADD, OpKind.SUB):
        _add_sub(w, as_words(a), b, op is OpKind.SUB)
    elif op is OpKind.MUL:
        _mul(w, as_words(a), b)
    else:
        _div(w, as_words(a), b)
    return w.probe


def _word(x) -> int:
    return x.word if isinstance(x, PackedFloat32) else int(x)


def _scalar(op, a, b, faults) -> FpuResult:
    res = fpu_batch(op, [0 if a is None else _word(a)], [_word(b)], faults)
    return res[0]


def fpu_add(a, b, faults: Iterable[FaultSpec] = ()) -> FpuResult:
    return _scalar(OpKind.ADD, a, b, faults)


def fpu_sub(a, b, faults: Iterable[FaultSpec] = ()) -> FpuResult:
    return _scalar(OpKind.SUB, a, b, faults)


def fpu_mul(a, b, faults: Iterable[FaultSpec] = ()) -> FpuResult:
    return _scalar(OpKind.MUL, a, b, faults)


def fpu_div(a, b, faults: Iterable[FaultSpec] = ()) -> FpuResult:
    return _scalar(OpKind.DIV, a, b, faults)


def fpu_sqrt(b, faults: Iterable[FaultSpec] = ()) -> FpuResult:
    return _scalar(OpKind.SQRT, None, b, faults)


def fpu_op(op, a, b, faults: Iterable[FaultSpec] = ()) -> FpuResult:
    op = OpKind.parse(op)
    return _scalar(op, None if op is OpKind.SQRT else a, b, faults)
