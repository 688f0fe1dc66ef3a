"""RPC decision layer: class dispatch, forward/reverse plans, Diff, bounds and suppression.

The batch entry point :func:`check_batch` runs the whole pipeline on word
arrays and drives every checker-side value (operand latches, the engine, the
comparator) through nets that can carry stuck-at faults.  :func:`check` is the
scalar wrapper returning a :class:`CheckVerdict`.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from . import checker as ck
from .float_bits import PackedFloat32, ReducedFloat, _check_k, as_words, is_normal
from .nets import FaultSite, FaultSpec, Net, OpKind, Wires, sites_of
from .softfpu import SUPPRESSING_FLAGS, FpuResult

_ALL = frozenset(OpKind)


class CheckClass(str, enum.Enum):
    SSADD = "SSADD"
    DSSUB = "DSSUB"
    SSSUB = "SSSUB"
    DSADD = "DSADD"
    MUL = "MUL"
    DIV = "DIV"
    SQRT = "SQRT"


CLASS_LIST = tuple(CheckClass)
CLASS_INDEX = {c: i for i, c in enumerate(CLASS_LIST)}
ADD_CLASSES = frozenset({CheckClass.SSADD, CheckClass.DSSUB, CheckClass.SSSUB, CheckClass.DSADD})
REVERSE_CLASSES = frozenset({CheckClass.SSSUB, CheckClass.DSADD, CheckClass.DIV, CheckClass.SQRT})


class Status(str, enum.Enum):
    NO_ERROR = "NoError"
    ERROR_DETECTED = "ErrorDetected"
    SUPPRESSED = "Suppressed"


STATUS_LIST = (Status.NO_ERROR, Status.ERROR_DETECTED, Status.SUPPRESSED)
ST_OK, ST_ERR, ST_SUP = 0, 1, 2


class SuppressionReason(str, enum.Enum):
    EXCEPTION = "Exception"
    NON_STANDARD_OPERAND = "NonStandardOperand"
    ZERO_RESULT = "ZeroResult"
    CHECKER_RANGE_EXIT = "CheckerRangeExit"


REASON_LIST = (None, SuppressionReason.EXCEPTION, SuppressionReason.NON_STANDARD_OPERAND,
               SuppressionReason.ZERO_RESULT, SuppressionReason.CHECKER_RANGE_EXIT)
R_NONE, R_EXC, R_NONSTD, R_ZERO, R_RANGE = range(5)


@dataclass(frozen=True)
class DiffBounds:
    lb: int
    ub: int

    def contains(self, diff) -> bool:
        return self.lb <= diff <= self.ub


def bounds_for(cls: CheckClass) -> DiffBounds:
    return DiffBounds(-1, 1) if CheckClass(cls) in ADD_CLASSES else DiffBounds(-1, 3)


@dataclass(frozen=True)
class CheckPlan:
    """Which engine runs, on which truncated operands, compared against which reference.

    Operand names are "A", "B" or "C"; ``subtract`` selects X − Y on the adder.
    """

    engine: str
    x: str
    y: str
    reference: str
    subtract: bool
    reverse: bool

    def describe(self) -> str:
        sym = "x" if self.engine == ck.ENGINE_MULT else ("-" if self.subtract else "+")
        return f"{self.x}^H {sym} {self.y}^H -> {self.reference}' vs {self.reference}^H"


@dataclass(frozen=True)
class CheckVerdict:
    op: OpKind
    k: int
    cls: CheckClass | None
    status: Status
    diff: int | None
    sign_match: bool
    suppression_reason: SuppressionReason | None = None

    def to_dict(self) -> dict:
        return {
            "op": self.op.value,
            "k": self.k,
            "class": self.cls.value if self.cls is not None else None,
            "status": self.status.value,
            "diff": self.diff,
            "sign_match": self.sign_match,
            "suppression_reason": (self.suppression_reason.value
                                   if self.suppression_reason is not None else None),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# plan codes: (engine is adder, x, y, reference, subtract); operand codes A=0, B=1, C=2
_A, _B, _C = 0, 1, 2
_NAMES = "ABC"
PLAN_TABLE = {
    "fwd_add": (True, _A, _B, _C, 0),      # SSADD: A + B
    "fwd_sub": (True, _A, _B, _C, 1),      # DSSUB: A - B
    "sssub_a": (True, _C, _B, _A, 0),      # S_A = S_B = S_C
    "sssub_b": (True, _A, _C, _B, 1),      # S_A = S_B != S_C
    "dsadd_a": (True, _C, _B, _A, 1),      # S_A = S_C != S_B
    "dsadd_b": (True, _C, _A, _B, 1),      # S_A != S_C = S_B
    "mul": (False, _A, _B, _C, 0),
    "div": (False, _C, _B, _A, 0),
    "sqrt": (False, _C, _C, _B, 0),
}
PLAN_KEYS = tuple(PLAN_TABLE)
PLAN_INDEX = {key: i for i, key in enumerate(PLAN_KEYS)}
_PLAN_ARR = np.array([PLAN_TABLE[key] for key in PLAN_KEYS], dtype=np.int64)
_PLAN_CLASS = np.array([CLASS_INDEX[c] for c in (
    CheckClass.SSADD, CheckClass.DSSUB, CheckClass.SSSUB, CheckClass.SSSUB,
    CheckClass.DSADD, CheckClass.DSADD, CheckClass.MUL, CheckClass.DIV, CheckClass.SQRT)],
    dtype=np.int64)


def _plan_from_key(key: str) -> CheckPlan:
    adder, x, y, ref, sub = PLAN_TABLE[key]
    cls = CLASS_LIST[_PLAN_CLASS[PLAN_INDEX[key]]]
    return CheckPlan(ck.ENGINE_ADDER if adder else ck.ENGINE_MULT, _NAMES[x], _NAMES[y],
                     _NAMES[ref], bool(sub), cls in REVERSE_CLASSES)


def plan_codes(op: OpKind, sa, sb, sc) -> np.ndarray:
    """Vectorised dispatch: plan index per lane from the three sign bits."""
    op = OpKind.parse(op)
    sa, sb, sc = (np.asarray(v, dtype=np.int64) for v in (sa, sb, sc))
    if op is OpKind.MUL:
        return np.full(sc.shape, PLAN_INDEX["mul"])
    if op is OpKind.DIV:
        return np.full(sc.shape, PLAN_INDEX["div"])
    if op is OpKind.SQRT:
        return np.full(sc.shape, PLAN_INDEX["sqrt"])
    same = sa == sb
    if op is OpKind.ADD:
        rev = np.where(sa == sc, PLAN_INDEX["dsadd_a"], PLAN_INDEX["dsadd_b"])
        return np.where(same, PLAN_INDEX["fwd_add"], rev)
    rev = np.where(sa == sc, PLAN_INDEX["sssub_a"], PLAN_INDEX["sssub_b"])
    return np.where(same, rev, PLAN_INDEX["fwd_sub"])


def classify_check(op, a: PackedFloat32, b: PackedFloat32, c: PackedFloat32
                   ) -> tuple[CheckClass, CheckPlan]:
    """Class and checking plan for one operation.  For sqrt, ``b`` is the radicand."""
    op = OpKind.parse(op)
    sa = 0 if a is None else a.sign_bit
    key = PLAN_KEYS[int(plan_codes(op, [sa], [b.sign_bit], [c.sign_bit])[0])]
    plan = _plan_from_key(key)
    return CLASS_LIST[_PLAN_CLASS[PLAN_INDEX[key]]], plan


def compute_diff(reference: ReducedFloat, checker_out: ReducedFloat) -> int:
    if reference.k != checker_out.k:
        raise ValueError("reference and checker output must share k")
    return reference.magnitude_bits - checker_out.magnitude_bits


# -- checker-side net catalogue -----------------------------------------------


@lru_cache(maxsize=None)
def checker_side_nets(k: int, op: OpKind) -> tuple[Net, ...]:
    """Latches, the engine used by ``op`` and the comparator, for checker width k."""
    _check_k(k)
    op = OpKind.parse(op)
    width = 9 + k
    latches = [Net("chk.in_x", width, _ALL, unit="checker"),
               Net("chk.in_y", width, _ALL, unit="checker"),
               Net("chk.ref", width, _ALL, unit="checker")]
    comparator = [Net("cmp.diff", 9 + k, _ALL, signed=True, unit="comparator"),
                  Net("cmp.sign_match", 1, _ALL, unit="comparator"),
                  Net("cmp.suppress", 1, _ALL, unit="comparator"),
                  Net("cmp.error", 1, _ALL, unit="comparator")]
    return tuple(latches + list(ck.engine_nets(k, ck.engine_for(op))) + comparator)


@lru_cache(maxsize=None)
def checker_catalog(k: int, op: OpKind) -> dict[str, Net]:
    return {n.name: n for n in checker_side_nets(k, OpKind.parse(op))}


def list_checker_sites(op, k: int) -> list[FaultSite]:
    return sites_of(checker_side_nets(k, OpKind.parse(op)))


# -- batch pipeline -----------------------------------------------------------


@dataclass
class VerdictBatch:
    """Lane-wise verdict arrays.  ``diff`` is meaningless where status is Suppressed."""

    op: OpKind
    k: int
    cls: np.ndarray
    plan: np.ndarray
    status: np.ndarray
    diff: np.ndarray
    sign_match: np.ndarray
    reason: np.ndarray
    ref_mag: np.ndarray     # {exp, fraction_k} of the latched reference
    out_mag: np.ndarray     # {exp, fraction_k} of the checker output

    def __len__(self):
        return len(self.status)

    def verdict(self, i: int) -> CheckVerdict:
        st = STATUS_LIST[int(self.status[i])]
        sup = st is Status.SUPPRESSED
        return CheckVerdict(self.op, self.k, CLASS_LIST[int(self.cls[i])], st,
                            None if sup else int(self.diff[i]), bool(self.sign_match[i]),
                            REASON_LIST[int(self.reason[i])])


def _truncate(words, k):
    return ((words >> 31) & 1, (words >> 23) & 0xFF, (words & 0x7FFFFF) >> (23 - k))


def check_batch(op, a, b, c_words, c_flags, k: int,
                checker_faults: Iterable[FaultSpec] = ()) -> VerdictBatch:
    """Check ``c = op(a, b)`` lane-wise.  For sqrt the radicand is ``b`` and ``a`` is ignored."""
    op = OpKind.parse(op)
    _check_k(k)
    w = Wires(checker_catalog(k, op), checker_faults)
    bw = as_words(b)
    aw = np.zeros_like(bw) if op is OpKind.SQRT else as_words(a)
    cw = as_words(c_words)
    flags = np.asarray(c_flags, dtype=np.int64)

    # suppression reasons, in priority order
    operands_ok = is_normal(bw) & (True if op is OpKind.SQRT else is_normal(aw))
    reason = np.where(~operands_ok, R_NONSTD,
                      np.where((flags & int(SUPPRESSING_FLAGS)) != 0, R_EXC,
                               np.where((cw & 0x7FFFFFFF) == 0, R_ZERO,
                                        np.where(~is_normal(cw), R_NONSTD, R_NONE))))

    sa = (aw >> 31) & 1
    plan = plan_codes(op, sa, (bw >> 31) & 1, (cw >> 31) & 1)
    cls = _PLAN_CLASS[plan]
    adder, xs, ys, rs, sub = (_PLAN_ARR[plan, i] for i in range(5))

    ops = np.stack([aw, bw, cw])
    lanes = np.arange(len(cw))
    kmask = (1 << (8 + k)) - 1

    def latch(name, sel):
        word = ops[sel, lanes]
        s, e, f = _truncate(word, k)
        v = w(name, (s << (8 + k)) | (e << k) | f)
        return (v >> (8 + k)) & 1, (v >> k) & 0xFF, v & ((1 << k) - 1), v & kmask

    sx, ex, fx, _ = latch("chk.in_x", xs)
    sy, ey, fy, _ = latch("chk.in_y", ys)
    sr, _, _, ref_mag = latch("chk.ref", rs)

    if op in (OpKind.ADD, OpKind.SUB):
        so, eo, fo, cst = ck.run_adder(w, k, sx, ex, fx, sy, ey, fy, sub)
    else:
        so, eo, fo, cst = ck.run_mult(w, k, sx, ex, fx, sy, ey, fy)
    reason = np.where(reason != R_NONE, reason,
                      np.where(cst == ck.STATUS_ZERO, R_ZERO,
                               np.where(cst == ck.STATUS_RANGE, R_RANGE, R_NONE)))

    out_mag = (eo << k) | fo
    diff = w("cmp.diff", ref_mag - (out_mag & kmask))
    sign_match = w("cmp.sign_match", (sr == so).astype(np.int64)) != 0
    suppress = w("cmp.suppress", (reason != R_NONE).astype(np.int64)) != 0
    ub = np.where(adder != 0, 1, 3)
    error = w("cmp.error", (~(sign_match & (diff >= -1) & (diff <= ub))).astype(np.int64)) != 0
    # a suppress line asserted without a natural cause is reported like an exception
    reason = np.where(suppress, np.where(reason == R_NONE, R_EXC, reason), R_NONE)
    status = np.where(suppress, ST_SUP, np.where(error, ST_ERR, ST_OK))
    return VerdictBatch(op, k, cls, plan, status, diff, sign_match, reason, ref_mag,
                        out_mag & kmask)


def check(op, a: PackedFloat32 | None, b: PackedFloat32, fpu_result: FpuResult, k: int,
          checker_faults: Iterable[FaultSpec] = ()) -> CheckVerdict:
    """Check one FPU result.  For sqrt pass the radicand as ``b`` (``a`` may be None)."""
    op = OpKind.parse(op)
    aw = [0 if a is None else a.word]
    vb = check_batch(op, aw, [b.word], [fpu_result.value.word], [int(fpu_result.flags)], k,
                     checker_faults)
    return vb.verdict(0)
