"""Reduced-precision checker: a (9+k)-bit adder/subtractor and a (9+k)-bit multiplier.

Both engines round to k fraction bits (RNE) and never produce zeros or
subnormals: exact cancellation and exponent range exit are reported as status
codes (batch API) or :class:`CheckerSuppression` (scalar API).
"""

from __future__ import annotations

from functools import lru_cache
from typing import Iterable

import numpy as np

from . import datapath as dp
from .float_bits import ReducedFloat, _check_k
from .nets import FaultSpec, Net, OpKind, Wires

ADD_OPS = frozenset({OpKind.ADD, OpKind.SUB})
MUL_OPS = frozenset({OpKind.MUL, OpKind.DIV, OpKind.SQRT})

ENGINE_ADDER = "chk.adder"
ENGINE_MULT = "chk.mult"

STATUS_OK, STATUS_ZERO, STATUS_RANGE = 0, 1, 2


class CheckerSuppression(Exception):
    """The checker cannot represent its result (exact zero or exponent out of [1, 254])."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@lru_cache(maxsize=None)
def engine_nets(k: int, engine: str) -> tuple[Net, ...]:
    _check_k(k)
    if engine == ENGINE_ADDER:
        nets = [Net("chk.adder.b_sign", 1, ADD_OPS, unit="checker")]
        nets += dp.adder_nets(engine, k, ADD_OPS, "checker", False)
    elif engine == ENGINE_MULT:
        nets = dp.multiplier_nets(engine, k, MUL_OPS, "checker", False)
    else:
        raise ValueError(f"unknown checker engine {engine!r}")
    return tuple(nets)


def engine_for(op) -> str:
    return ENGINE_ADDER if OpKind.parse(op) in ADD_OPS else ENGINE_MULT


def _encode(k, exp, rounded, zero):
    exp = np.where(zero, 0, exp)
    status = np.where(zero, STATUS_ZERO,
                      np.where((exp < 1) | (exp > 254), STATUS_RANGE, STATUS_OK))
    frac = rounded & ((1 << k) - 1)
    return exp, frac, status


def run_adder(w: Wires, k: int, sx, ex, fx, sy, ey, fy, subtract):
    """Add (or subtract, lane-wise) two reduced operands given as field arrays.

    Returns ``(sign, exp_bits, fraction_k, status)``.
    """
    hidden = 1 << k
    sy = w("chk.adder.b_sign", sy ^ subtract)
    sign, exp, total, pos = dp.adder_core(w, ENGINE_ADDER, sx, ex, fx | hidden,
                                          sy, ey, fy | hidden, k)
    exp, rounded, zero, _, _ = dp.normalize_round(w, ENGINE_ADDER, exp, total, 0, k, pos, False)
    exp, frac, status = _encode(k, exp, rounded, zero)
    return np.where(zero, 0, sign), exp, frac, status


def run_mult(w: Wires, k: int, sx, ex, fx, sy, ey, fy):
    hidden = 1 << k
    sign, exp, prod, pos = dp.multiplier_core(w, ENGINE_MULT, sx, ex, fx | hidden,
                                              sy, ey, fy | hidden, k)
    exp, rounded, zero, _, _ = dp.normalize_round(w, ENGINE_MULT, exp, prod, 0, k, pos, False)
    exp, frac, status = _encode(k, exp, rounded, zero)
    return sign, exp, frac, status


def _fields(x: ReducedFloat):
    return (np.array([x.sign_bit], dtype=np.int64), np.array([x.exp_bits], dtype=np.int64),
            np.array([x.fraction_k], dtype=np.int64))


def _scalar(engine: str, a: ReducedFloat, b: ReducedFloat, subtract: int,
            faults: Iterable[FaultSpec]) -> ReducedFloat:
    if a.k != b.k:
        raise ValueError(f"checker operands must share k (got {a.k} and {b.k})")
    k = a.k
    w = Wires({n.name: n for n in engine_nets(k, engine)}, faults)
    if engine == ENGINE_ADDER:
        s, e, f, st = run_adder(w, k, *_fields(a), *_fields(b), np.int64(subtract))
    else:
        s, e, f, st = run_mult(w, k, *_fields(a), *_fields(b))
    if st[0] == STATUS_ZERO:
        raise CheckerSuppression("ZeroResult")
    if st[0] == STATUS_RANGE:
        raise CheckerSuppression("CheckerRangeExit")
    return ReducedFloat(k, int(s[0]) & 1, int(e[0]), int(f[0]))


def rpc_add(a: ReducedFloat, b: ReducedFloat, faults: Iterable[FaultSpec] = ()) -> ReducedFloat:
    return _scalar(ENGINE_ADDER, a, b, 0, faults)


def rpc_sub(a: ReducedFloat, b: ReducedFloat, faults: Iterable[FaultSpec] = ()) -> ReducedFloat:
    return _scalar(ENGINE_ADDER, a, b, 1, faults)


def rpc_mul(a: ReducedFloat, b: ReducedFloat, faults: Iterable[FaultSpec] = ()) -> ReducedFloat:
    return _scalar(ENGINE_MULT, a, b, 0, faults)
