"""Exact-arithmetic reconstruction of RPC checks and directed corner-case searches.

:func:`trace` rebuilds one fault-free check with :class:`fractions.Fraction`
arithmetic, independently of the soft FPU and checker datapaths: the exact
result, both rounding errors, the cross term ``M*``, the three-term split of
``M_ref^H - M'`` and the exponent case.  :func:`verify_term_bounds` tests each
term against its analytical interval.

The generators and :func:`search_diff4_mul` are vectorised; they use the
datapath (through :func:`rpc_check.check_batch`) for one route and exact
integer arithmetic for the other, and report any disagreement.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .float_bits import (BIAS, FRAC_BITS, OperandClass, PackedFloat32, classify,
                         format_hex, mantissa_parts)
from .nets import OpKind
from .rpc_check import (CLASS_INDEX, CheckClass, CheckPlan, ST_OK, ST_SUP,
                        check_batch, classify_check)
from .softfpu import fpu_batch

EPS = Fraction(1, 1 << FRAC_BITS)        # 2^-23
HALF_EPS = Fraction(1, 1 << (FRAC_BITS + 1))
MIN_EXP, MAX_EXP = 1 - BIAS, 254 - BIAS


class ExponentCase(str, enum.Enum):
    COMMON_1 = "CommonCase1"
    COMMON_2 = "CommonCase2"
    CORNER = "CornerCase"
    CHECKER_CARRY = "CheckerCarry"     # checker exponent one above the reference's
    UNCLASSIFIED = "Unclassified"


# -- exact rounding ------------------------------------------------------------


def _floor_log2(x: Fraction) -> int:
    e = x.numerator.bit_length() - x.denominator.bit_length()
    if Fraction(2) ** e > x:
        e -= 1
    return e


def round_rne(x: Fraction, q: int) -> tuple[int, Fraction]:
    """Round positive ``x`` to ``q`` fraction bits, unbounded exponent: returns (E, M)."""
    if x <= 0:
        raise ValueError("round_rne expects a positive value")
    e = _floor_log2(x)
    y = x * Fraction(2) ** (q - e)
    n, rem = divmod(y.numerator, y.denominator)
    twice = 2 * rem
    if twice > y.denominator or (twice == y.denominator and n & 1):
        n += 1
    if n == 1 << (q + 1):
        n >>= 1
        e += 1
    return e, Fraction(n, 1 << q)


def sqrt_rne(x: Fraction, q: int) -> tuple[int, Fraction, bool]:
    """Correctly rounded square root of positive ``x``: (E, M, exact)."""
    e = _floor_log2(x) // 2
    y = x * Fraction(2) ** (2 * (q - e))
    n = math.isqrt(y.numerator // y.denominator)
    exact = Fraction(n * n) == y
    # round up iff sqrt(y) > n + 1/2, i.e. 4y > (2n+1)^2 (ties cannot occur)
    if 4 * y > (2 * n + 1) ** 2:
        n += 1
    if n == 1 << (q + 1):
        n >>= 1
        e += 1
    return e, Fraction(n, 1 << q), exact


def _low(x: Fraction, k: int) -> Fraction:
    """Part of x below the k-th fraction bit."""
    scaled = x * (1 << k)
    return x - Fraction(scaled.numerator // scaled.denominator, 1 << k)


# -- trace ----------------------------------------------------------------------


@dataclass(frozen=True)
class OracleTrace:
    """Exact reconstruction of one fault-free check.

    Mantissas and errors are in units of their own exponent.  ``terms`` are
    the three summands of ``M_ref^H - M' * 2^(E' - E_ref)``: truncation
    cross-terms, the reference's truncated-off bits, and rounding errors.
    ``e_max`` is the base exponent of the case split (largest operand exponent
    for add classes, the exponent sum for multiplicative ones).
    ``exact_result`` and ``delta_full`` are None for sqrt, whose exact root is
    generally irrational.
    """

    op: OpKind
    k: int
    cls: CheckClass
    plan: CheckPlan
    kind: str
    words: dict
    exact_result: Fraction | None
    delta_full: Fraction | None
    checker_exact: Fraction
    delta_checker: Fraction
    m_star: Fraction
    m_low_terms: dict
    exponents: dict
    e_max: int
    exponent_case: ExponentCase
    terms: tuple
    ref_high: Fraction
    checker_mantissa: Fraction
    diff_predicted: int
    identity_holds: bool

    def to_dict(self) -> dict:
        return {
            "op": self.op.value, "k": self.k, "class": self.cls.value, "kind": self.kind,
            "plan": self.plan.describe(),
            "words": {n: format_hex(w) for n, w in self.words.items()},
            "exact_result": rational_json(self.exact_result),
            "delta_full": rational_json(self.delta_full),
            "checker_exact": rational_json(self.checker_exact),
            "delta_checker": rational_json(self.delta_checker),
            "m_star": rational_json(self.m_star),
            "m_low_terms": {n: rational_json(v) for n, v in sorted(self.m_low_terms.items())},
            "exponents": dict(sorted(self.exponents.items())),
            "e_max": self.e_max,
            "exponent_case": self.exponent_case.value,
            "terms": [rational_json(t) for t in self.terms],
            "ref_high": rational_json(self.ref_high),
            "checker_mantissa": rational_json(self.checker_mantissa),
            "diff_predicted": self.diff_predicted,
            "identity_holds": self.identity_holds,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def rational_json(x: Fraction | None):
    """Dyadic values as {"num", "den_exp"} (x = num / 2**den_exp); others as {"num", "den"}."""
    if x is None:
        return None
    d = x.denominator
    if d & (d - 1) == 0:
        return {"num": x.numerator, "den_exp": d.bit_length() - 1}
    return {"num": x.numerator, "den": d}


def rational_from_json(obj) -> Fraction | None:
    if obj is None:
        return None
    if "den_exp" in obj:
        return Fraction(obj["num"], 1 << obj["den_exp"])
    return Fraction(obj["num"], obj["den"])


def _as_packed(x) -> PackedFloat32:
    return x if isinstance(x, PackedFloat32) else PackedFloat32(int(x))


def _mag(x: PackedFloat32) -> Fraction:
    m, _, _ = mantissa_parts(x, 1)
    return m * Fraction(2) ** x.exponent


def _signed(x: Fraction, sign: int) -> Fraction:
    return -x if sign else x


def exact_result(op, a: PackedFloat32 | None, b: PackedFloat32) -> tuple[Fraction | None, int]:
    """Exact value of op(a, b) (None for sqrt) and the correctly rounded binary32 word."""
    op = OpKind.parse(op)
    if op is OpKind.SQRT:
        if b.sign_bit:
            raise ValueError("square root of a negative operand")
        e, m, _ = sqrt_rne(_mag(b), FRAC_BITS)
        return None, _pack_normal(0, e, m)
    va, vb = _signed(_mag(a), a.sign_bit), _signed(_mag(b), b.sign_bit)
    v = {OpKind.ADD: va + vb, OpKind.SUB: va - vb, OpKind.MUL: va * vb,
         OpKind.DIV: va / vb}[op]
    if v == 0:
        raise ValueError("exact zero result")
    e, m = round_rne(abs(v), FRAC_BITS)
    return v, _pack_normal(int(v < 0), e, m)


def _pack_normal(sign: int, e: int, m: Fraction) -> int:
    if not MIN_EXP <= e <= MAX_EXP:
        raise ValueError(f"result exponent {e} outside the normal range")
    frac = int((m - 1) * (1 << FRAC_BITS))
    return (sign << 31) | ((e + BIAS) << 23) | frac


def _kind(cls: CheckClass, plan: CheckPlan) -> str:
    if cls is CheckClass.MUL:
        return "mul"
    if cls is CheckClass.DIV:
        return "div"
    if cls is CheckClass.SQRT:
        return "sqrt"
    return "add_rev" if plan.reverse else "add_fwd"


def trace(op, a, b, k: int) -> OracleTrace:
    """Exact reconstruction of checking op(a, b) with a k-bit checker.

    ``a`` and ``b`` are words or PackedFloat32; for sqrt the radicand is ``b``
    and ``a`` is ignored.  Raises ValueError unless the operands are normal and
    the correctly rounded result is normal and nonzero.
    """
    op = OpKind.parse(op)
    if not 1 <= k <= FRAC_BITS:
        raise ValueError("k must be in [1, 23]")
    B = _as_packed(b)
    A = None if op is OpKind.SQRT else _as_packed(a)
    for x in (A, B):
        if x is not None and classify(x) is not OperandClass.NORMAL:
            raise ValueError(f"operand {x} is not normal")
    c_hat, c_word = exact_result(op, A, B)
    C = PackedFloat32(c_word)
    cls, plan = classify_check(op, A, B, C)
    kind = _kind(cls, plan)

    vals = {"B": B, "C": C}
    if A is not None:
        vals["A"] = A
    parts = {n: mantissa_parts(x, k) for n, x in vals.items()}
    E = {n: x.exponent for n, x in vals.items()}
    M = {n: p[0] for n, p in parts.items()}
    MH = {n: p[1] for n, p in parts.items()}
    ML = {n: p[2] for n, p in parts.items()}
    two = Fraction(2)

    X, Y, R = plan.x, plan.y, plan.reference
    # the checker's exact (unrounded) result on truncated operands
    if kind in ("mul", "div", "sqrt"):
        v_chk = MH[X] * MH[Y] * two ** (E[X] + E[Y])
    else:
        vx = _signed(MH[X] * two ** E[X], vals[X].sign_bit)
        vy = _signed(MH[Y] * two ** E[Y], vals[Y].sign_bit)
        v_chk = abs(vx - vy if plan.subtract else vx + vy)
    e_chk, m_chk = round_rne(v_chk, k)
    d_chk = v_chk / two ** e_chk - m_chk
    if not MIN_EXP <= e_chk <= MAX_EXP:
        raise ValueError("checker result leaves the normal exponent range")

    e_ref = E[R]
    chk_scale = two ** (e_chk - e_ref)
    d_full = None if c_hat is None else abs(c_hat) / two ** E["C"] - M["C"]

    if kind == "mul":
        base = E["A"] + E["B"]
        m_star = MH["A"] * ML["B"] + ML["A"] * MH["B"] + ML["A"] * ML["B"]
        t1 = m_star * two ** (base - e_ref)
        t3 = d_chk * chk_scale - d_full
        low = {"A": ML["A"], "B": ML["B"], "C": ML["C"]}
    elif kind == "div":
        base = E["B"] + E["C"]
        m_star = MH["B"] * ML["C"] + ML["B"] * MH["C"] + ML["B"] * ML["C"]
        t1 = m_star * two ** (base - e_ref)
        t3 = d_full * M["B"] * two ** (base - e_ref) + d_chk * chk_scale
        low = {"A": ML["A"], "B": ML["B"], "C": ML["C"]}
    elif kind == "sqrt":
        base = 2 * E["C"]
        m_star = 2 * MH["C"] * ML["C"] + ML["C"] * ML["C"]
        t1 = m_star * two ** (base - e_ref)
        t3 = M["B"] - M["C"] * M["C"] * two ** (base - e_ref) + d_chk * chk_scale
        low = {"B": ML["B"], "C": ML["C"]}
    elif kind == "add_fwd":
        base = max(E["A"], E["B"])
        m_star = Fraction(0)
        t1 = ML["A"] * two ** (E["A"] - e_ref) + ML["B"] * two ** (E["B"] - e_ref)
        t3 = d_chk * chk_scale - d_full
        low = {"A": ML["A"], "B": ML["B"], "C": ML["C"]}
    else:
        other = X if X != "C" else Y
        base = max(E[other], E["C"])
        m_star = Fraction(0)
        t1 = ML[other] * two ** (E[other] - e_ref) + ML["C"] * two ** (E["C"] - e_ref)
        t3 = d_chk * chk_scale + d_full * two ** (E["C"] - e_ref)
        low = {other: ML[other], "C": ML["C"], R: ML[R]}
    t2 = -ML[R]

    total = t1 + t2 + t3
    identity = total == MH[R] - m_chk * chk_scale

    if e_ref == base and e_chk == base:
        case = ExponentCase.COMMON_1
    elif e_ref == base + 1 and e_chk == base + 1:
        case = ExponentCase.COMMON_2
    elif e_ref == base + 1 and e_chk == base:
        case = ExponentCase.CORNER
    elif e_chk == e_ref + 1:
        case = ExponentCase.CHECKER_CARRY
    else:
        case = ExponentCase.UNCLASSIFIED

    # Diff from the terms: M' = (M_ref^H - total) * 2^(E_ref - E')
    m_from_terms = (MH[R] - total) / chk_scale
    diff = Fraction(e_ref - e_chk) * (1 << k) + (MH[R] - m_from_terms) * (1 << k)
    if diff.denominator != 1:
        identity = False
    exps = {n: E[n] for n in E}
    exps.update({"ref": e_ref, "checker": e_chk})
    return OracleTrace(op, k, cls, plan, kind, {n: x.word for n, x in vals.items()},
                       c_hat, d_full, v_chk, d_chk, m_star, low, exps, base, case,
                       (t1, t2, t3), MH[R], m_chk, int(diff), identity)


# -- term bounds ---------------------------------------------------------------


@dataclass(frozen=True)
class TermCheck:
    name: str
    value: Fraction
    lo: Fraction
    hi: Fraction
    lo_strict: bool = False
    hi_strict: bool = False

    @property
    def ok(self) -> bool:
        lo_ok = self.value > self.lo if self.lo_strict else self.value >= self.lo
        hi_ok = self.value < self.hi if self.hi_strict else self.value <= self.hi
        return lo_ok and hi_ok

    def describe(self) -> str:
        lb = "(" if self.lo_strict else "["
        rb = ")" if self.hi_strict else "]"
        return f"{self.name} = {self.value} in {lb}{self.lo}, {self.hi}{rb}: {'ok' if self.ok else 'VIOLATED'}"


@dataclass(frozen=True)
class TermReport:
    trace: OracleTrace
    checks: tuple

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def violations(self) -> list:
        return [c for c in self.checks if not c.ok]


def term_intervals(kind: str, case: ExponentCase, k: int) -> dict:
    """Analytical interval of each term, as name -> (lo, hi, lo_strict, hi_strict)."""
    u = Fraction(1, 1 << k)
    half_u = u / 2
    low = (-u + EPS, Fraction(0), False, False)
    sym = lambda r, strict=False: (-r, r, strict, strict)   # noqa: E731
    cc1 = case is ExponentCase.COMMON_1
    if kind == "mul":
        t1 = (Fraction(0), (4 if cc1 else 2) * (u - EPS), False, False)
        t3 = sym(HALF_EPS + half_u)
    elif kind == "div":
        t1 = (Fraction(0), (4 if cc1 else 2) * (u - EPS), False, False)
        t3 = sym(half_u + EPS, True) if cc1 else sym(u + HALF_EPS)
    elif kind == "sqrt":
        t1 = (Fraction(0), (4 if cc1 else 2) * (u - EPS), False, False)
        t3 = sym(half_u + 2 * EPS, True) if cc1 else sym(half_u + EPS)
    elif kind == "add_fwd":
        t1 = (Fraction(0), (Fraction(3, 2) if cc1 else 1) * (u - EPS), False, False)
        t3 = sym(half_u + HALF_EPS)
    else:
        t1 = (Fraction(0), (Fraction(3, 2) if cc1 else 1) * (u - EPS), False, False)
        # closed: simultaneous ties in both roundings reach the case-2 bound exactly
        t3 = sym(half_u + HALF_EPS) if cc1 else sym(half_u + HALF_EPS / 2)
    return {"<1>": t1, "<2>": low, "<3>": t3}


def diff_range(kind: str, case: ExponentCase) -> tuple[int, int]:
    add = kind in ("add_fwd", "add_rev")
    if case is ExponentCase.COMMON_2 and not add:
        return -1, 2
    if case is ExponentCase.CORNER:
        if kind == "add_fwd":
            return 1, 1
        return (-1, 1) if add else (1, 3)
    return (-1, 1) if add else (-1, 3)


def verify_term_bounds(t: OracleTrace) -> TermReport:
    """Check every term of ``t`` against its interval for the trace's exponent case."""
    f0 = Fraction(0)
    checks = [TermCheck("identity", Fraction(int(t.identity_holds)), Fraction(1), Fraction(1)),
              TermCheck("exponent_case_known",
                        Fraction(int(t.exponent_case is not ExponentCase.UNCLASSIFIED)),
                        Fraction(1), Fraction(1))]
    if t.delta_full is not None:
        checks.append(TermCheck("axiom4 |delta_C|", abs(t.delta_full), f0, HALF_EPS))
    checks.append(TermCheck("axiom5 |delta'|", abs(t.delta_checker), f0,
                            Fraction(1, 1 << (t.k + 1))))
    if t.exponent_case in (ExponentCase.COMMON_1, ExponentCase.COMMON_2):
        for (name, (lo, hi, ls, hs)), value in zip(
                term_intervals(t.kind, t.exponent_case, t.k).items(), t.terms):
            checks.append(TermCheck(name, value, lo, hi, ls, hs))
    lo, hi = diff_range(t.kind, t.exponent_case)
    checks.append(TermCheck("diff", Fraction(t.diff_predicted), Fraction(lo), Fraction(hi)))
    return TermReport(t, tuple(checks))


# -- rounding-case analysis of multiplication ------------------------------------


ROUNDING_COMBOS = tuple("-".join(c) for c in itertools.product(("I", "II"), ("III", "IV"),
                                                              ("V", "VI")))
CLAIMED_IMPOSSIBLE = ("I-IV-V", "II-III-V", "II-IV-VI")


def classify_rounding_cases(t: OracleTrace) -> tuple[str, str, str]:
    """Step 1 / 2a / 2b case labels of a multiplication trace in common case 1."""
    if t.kind != "mul" or t.exponent_case is not ExponentCase.COMMON_1:
        raise ValueError("rounding-case analysis needs a mul trace in common case 1")
    k = t.k
    u = Fraction(1, 1 << k)
    mc_exact = t.exact_result / Fraction(2) ** t.e_max
    mc_exact = abs(mc_exact)
    q = t.checker_exact / Fraction(2) ** t.e_max          # unrounded checker mantissa
    step1 = "I" if _low(q, k) + _low(t.m_star, k) < u else "II"
    m_c = t.ref_high + t.m_low_terms["C"]                  # the FPU's rounded mantissa
    step2a = "III" if m_c - _low(m_c, k) == mc_exact - _low(mc_exact, k) else "IV"
    step2b = "V" if t.checker_mantissa == q - _low(q, k) else "VI"
    return step1, step2a, step2b


# -- vectorised exact integer model of mantissa products ----------------------------


def _rne_shift(x: np.ndarray, drop) -> np.ndarray:
    drop = np.asarray(drop, dtype=np.int64)
    kept = x >> drop
    rem = x - (kept << drop)
    half = np.int64(1) << (drop - 1)
    up = (rem > half) | ((rem == half) & ((kept & 1) == 1))
    return kept + up


def round_product(p: np.ndarray, q: int):
    """Round products ``p / 2^46`` in [1, 4) to q fraction bits.

    Returns ``(carry, sig)``: exponent offset (0 or 1) and the significand
    including the hidden bit, ``sig / 2^q`` in [1, 2).
    """
    big = p >= (np.int64(1) << 47)
    sig = _rne_shift(p, np.where(big, 47 - q, 46 - q))
    carry = big.astype(np.int64)
    over = sig >= (np.int64(1) << (q + 1))
    return carry + over, np.where(over, sig >> 1, sig)


def mul_int_model(ma: np.ndarray, mb: np.ndarray, k: int) -> dict:
    """Exact integer view of a fault-free mul check from 24-bit significands.

    Returns a dict of arrays: FPU and checker exponent offsets, rounded
    significands, the integer Diff and the rounding-case labels (valid in
    common case 1 only).
    """
    drop = FRAC_BITS - k
    p = ma * mb
    mah, mbh = (ma >> drop) << drop, (mb >> drop) << drop
    qv = mah * mbh
    c_off, c_sig = round_product(p, FRAC_BITS)
    q_off, q_sig = round_product(qv, k)
    diff = ((c_off - q_off) << k) + (c_sig >> drop) - q_sig

    low_bits = 46 - k
    low_mask = (np.int64(1) << low_bits) - 1
    mstar = p - qv
    step1_ii = ((qv & low_mask) + (mstar & low_mask)) >= (np.int64(1) << low_bits)
    step2a_iv = (c_sig >> drop) != (p >> low_bits)
    step2b_vi = q_sig != (qv >> low_bits)
    cc1 = (c_off == 0) & (q_off == 0)
    return {"c_off": c_off, "c_sig": c_sig, "q_off": q_off, "q_sig": q_sig, "diff": diff,
            "common1": cc1, "step1_ii": step1_ii, "step2a_iv": step2a_iv,
            "step2b_vi": step2b_vi}


def combo_codes(model: dict) -> np.ndarray:
    """Index into ROUNDING_COMBOS per lane."""
    return (model["step1_ii"].astype(np.int64) * 4 + model["step2a_iv"] * 2
            + model["step2b_vi"])


# -- directed generators -------------------------------------------------------


@dataclass
class CornerReport:
    """Hits of a corner-case generator.

    ``a``, ``b`` and ``ops`` describe the hit operations; ``diff`` is the
    datapath Diff; ``status`` the check status codes.  For multiplication the
    two-bit carry patterns are in ``ab``, ``cd`` and ``ef`` and the
    pattern-predicted Diff in ``pattern_diff``.
    """

    k: int
    kind: str
    attempts: int
    a: np.ndarray
    b: np.ndarray
    ops: list
    diff: np.ndarray
    status: np.ndarray
    ab: np.ndarray | None = None
    cd: np.ndarray | None = None
    ef: np.ndarray | None = None
    pattern_diff: np.ndarray | None = None

    @property
    def hits(self) -> int:
        return len(self.diff)

    @property
    def hit_density(self) -> float:
        return self.hits / self.attempts if self.attempts else 0.0

    def pairs(self):
        for op, a, b in zip(self.ops, self.a, self.b):
            yield op, int(a), int(b)

    def pattern_table(self) -> dict:
        """(ab, cd) -> {Diff: count} over mul hits, as binary strings."""
        table: dict = {}
        if self.ab is None:
            return table
        for ab, cd, d in zip(self.ab, self.cd, self.diff):
            key = (format(int(ab), "02b"), format(int(cd), "02b"))
            row = table.setdefault(key, {})
            row[int(d)] = row.get(int(d), 0) + 1
        return dict(sorted(table.items()))

    def deviations(self) -> int:
        if self.kind == "add":
            return int(np.sum((self.diff != 1) | (self.status != ST_OK)))
        bad = (self.diff < 1) | (self.diff > 3) | (self.status != ST_OK)
        bad |= self.pattern_diff != self.diff
        bad |= (self.ab + self.cd) < 4
        bad |= self.ef == 3
        return int(np.sum(bad))


def _corner_hits(op, a, b, k, want_classes):
    r = fpu_batch(op, a, b)
    v = check_batch(op, a, b, r.words, r.flags, k)
    hit = (v.status != ST_SUP) & np.isin(v.cls, want_classes)
    hit &= (v.ref_mag >> k) == (v.out_mag >> k) + 1
    return hit, r, v


def _sig_words(sig, exp, sign):
    return (sign << 31) | (exp << 23) | (sig & 0x7FFFFF)


def gen_corner_add(k: int, seed: int = 0, hits: int = 1000, max_attempts: int = 10**7,
                   batch: int = 1 << 16) -> CornerReport:
    """Same-magnitude-direction add/sub (SSADD or DSSUB) whose full result carries
    into a new binade while the checker's does not.

    Operands are built backwards: the larger significand sits just below
    ``2 - 2^-d * M_B`` so the exact sum lands within a few units of 2.
    """
    if not 1 <= k <= FRAC_BITS:
        raise ValueError("k must be in [1, 23]")
    rng = np.random.default_rng([seed, k, 1])
    want = [CLASS_INDEX[CheckClass.SSADD], CLASS_INDEX[CheckClass.DSSUB]]
    out_a, out_b, out_ops, out_d, out_s = [], [], [], [], []
    attempts = found = 0
    while found < hits and attempts < max_attempts:
        n = batch
        d = rng.integers(0, 26, n)
        mb = (1 << 23) | rng.integers(0, 1 << 23, n)
        # M_A * 2^23 = 2^24 - ceil(mb / 2^d) + jitter, clipped to a valid significand
        need = (1 << 24) - ((mb + (np.int64(1) << d) - 1) >> d)
        ma = np.clip(need + rng.integers(-1, 3, n), 1 << 23, (1 << 24) - 1)
        ea = rng.integers(40, 200, n)
        eb = ea - d
        sa = rng.integers(0, 2, n)
        sub = rng.random(n) < 0.5
        sb = np.where(sub, 1 - sa, sa)
        swap = rng.random(n) < 0.5
        wa = _sig_words(ma, ea, sa)
        wb = _sig_words(mb, eb, sb)
        wa, wb = np.where(swap, wb, wa), np.where(swap, wa, wb)
        for op, sel in ((OpKind.ADD, ~sub), (OpKind.SUB, sub)):
            a_, b_ = wa[sel], wb[sel]
            hit, r, v = _corner_hits(op, a_, b_, k, want)
            out_a.append(a_[hit])
            out_b.append(b_[hit])
            out_ops += [op] * int(hit.sum())
            out_d.append(v.diff[hit])
            out_s.append(v.status[hit])
            found += int(hit.sum())
        attempts += n
    return CornerReport(k, "add", attempts, np.concatenate(out_a), np.concatenate(out_b),
                        out_ops, np.concatenate(out_d), np.concatenate(out_s))


def mul_corner_pattern(c_words: np.ndarray, f_chk: np.ndarray, k: int):
    """Two-bit patterns of the mul corner case and the Diff they predict.

    With ``M_D = C / 2^E' - M'`` (C the rounded product, E' and M' the
    checker's exponent and mantissa), ``ab`` is the integer part of
    ``M_D * 2^k`` and ``cd`` the last two fraction bits of M'.
    """
    mc = (c_words & 0x7FFFFF) | (1 << 23)
    top = mc >> (22 - k) if k <= 22 else mc << 1
    ab = top - (1 << k) - f_chk
    cd = f_chk & 3
    s = ab + cd
    ef = s & 3
    e = (s >> 1) & 1
    return ab, cd, ef, 4 + e - cd


def gen_corner_mul(k: int, seed: int = 0, hits: int = 1000, max_attempts: int = 10**7,
                   batch: int = 1 << 16) -> CornerReport:
    """Multiplications whose rounded product reaches the next binade while the
    checker's product stays below it.

    Built backwards: M_B is chosen as ceil(2^47 / M_A) plus a small jitter so
    the exact product sits just at or above 2, with M_A biased towards large
    truncated-off parts so the checker's product falls short.
    """
    if not 2 <= k <= FRAC_BITS:
        raise ValueError("k must be in [2, 23] for the two-bit pattern analysis")
    rng = np.random.default_rng([seed, k, 2])
    want = [CLASS_INDEX[CheckClass.MUL]]
    drop = FRAC_BITS - k
    out = {key: [] for key in ("a", "b", "d", "s", "ab", "cd", "ef", "pd")}
    attempts = found = 0
    while found < hits and attempts < max_attempts:
        n = batch
        ma = (1 << 23) | rng.integers(0, 1 << 23, n)
        heavy = rng.random(n) < 0.7
        low_ones = (np.int64(1) << drop) - 1
        ma = np.where(heavy, ma | (low_ones & ~rng.integers(0, 1 << max(drop - 2, 0), n)), ma)
        mb = ((np.int64(1) << 47) + ma - 1) // ma + rng.integers(-1, 3, n)
        mb = np.clip(mb, 1 << 23, (1 << 24) - 1)
        ea = rng.integers(90, 165, n)
        eb = 254 - ea
        sa, sb = rng.integers(0, 2, n), rng.integers(0, 2, n)
        wa, wb = _sig_words(ma, ea, sa), _sig_words(mb, eb, sb)
        hit, r, v = _corner_hits(OpKind.MUL, wa, wb, k, want)
        ab, cd, ef, pd = mul_corner_pattern(r.words[hit], v.out_mag[hit] & ((1 << k) - 1), k)
        for key, arr in (("a", wa[hit]), ("b", wb[hit]), ("d", v.diff[hit]),
                         ("s", v.status[hit]), ("ab", ab), ("cd", cd), ("ef", ef), ("pd", pd)):
            out[key].append(arr)
        found += int(hit.sum())
        attempts += n
    cat = {key: np.concatenate(vals) for key, vals in out.items()}
    return CornerReport(k, "mul", attempts, cat["a"], cat["b"], [OpKind.MUL] * len(cat["d"]),
                        cat["d"], cat["s"], cat["ab"], cat["cd"], cat["ef"], cat["pd"])


# -- search for Diff >= 4 in multiplication ---------------------------------------


@dataclass
class Diff4Report:
    k: int
    budget: int
    samples: int
    max_diff: int
    diff_histogram: dict
    combo_counts: dict
    impossible_counts: dict
    witnesses: dict = field(default_factory=dict)
    route_mismatches: int = 0
    mode_counts: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.max_diff <= 3 and self.route_mismatches == 0

    @property
    def impossible_total(self) -> int:
        return sum(self.impossible_counts.values())

    def to_dict(self) -> dict:
        return {"k": self.k, "budget": self.budget, "samples": self.samples,
                "max_diff": self.max_diff,
                "diff_histogram": {str(d): c for d, c in sorted(self.diff_histogram.items())},
                "combo_counts": dict(self.combo_counts),
                "impossible_counts": dict(self.impossible_counts),
                "witnesses": {key: [format_hex(a), format_hex(b)]
                              for key, (a, b) in sorted(self.witnesses.items())},
                "route_mismatches": self.route_mismatches,
                "mode_counts": dict(self.mode_counts)}


SEARCH_MODES = ("uniform", "ones_fraction", "low_near_ulp", "heavy_low", "checker_round_up")


def _search_significands(mode: str, rng, n: int, k: int):
    drop = FRAC_BITS - k
    full = (1 << 23) - 1
    low_mask = (1 << drop) - 1
    rand = lambda: (1 << 23) | rng.integers(0, 1 << 23, n)   # noqa: E731
    if mode == "uniform":
        return rand(), rand()
    if mode == "ones_fraction":
        # fractions of all ones with a few random holes
        holes = lambda: rng.integers(0, 1 << 23, n) & rng.integers(0, 1 << 23, n) \
            & rng.integers(0, 1 << 23, n)                             # noqa: E731
        return (1 << 23) | (full ^ holes()), (1 << 23) | (full ^ holes())
    if mode == "heavy_low":
        ma, mb = rand(), rand()
        return ma | (low_mask & ~rng.integers(0, 8, n)), mb | (low_mask & ~rng.integers(0, 8, n))
    if mode == "low_near_ulp":
        # aim the exact product's bits below position k at 2^-k - 2^-24 (FPU round-up regime)
        ma = rand()
        hi = rng.integers(1 << k, 1 << (k + 1), n)
        target = ((hi + 1) << (46 - k)) - (np.int64(1) << 22) + rng.integers(-(1 << 22), 1 << 22, n)
        mb = np.clip(target // ma + rng.integers(-2, 3, n), 1 << 23, (1 << 24) - 1)
        return ma, mb
    # checker_round_up: truncated product just above a checker rounding midpoint
    mah = rng.integers(1 << k, 1 << (k + 1), n)
    mbh = rng.integers(1 << k, 1 << (k + 1), n)
    ma = (mah << drop) | rng.integers(0, 1 << drop, n) | (low_mask & ~rng.integers(0, 4, n))
    mb = (mbh << drop) | rng.integers(0, 1 << drop, n)
    return ma, mb


def search_diff4_mul(k: int, budget: int, seed: int = 0, batch: int = 1 << 18,
                     cross_check: bool = True) -> Diff4Report:
    """Randomised and directed search for a fault-free multiplication with Diff >= 4.

    Every sample is evaluated by the exact integer model; with ``cross_check``
    the soft FPU plus checker datapath is run on the same operands and any
    Diff disagreement is counted in ``route_mismatches``.
    """
    if not 1 <= k <= FRAC_BITS:
        raise ValueError("k must be in [1, 23]")
    rng = np.random.default_rng([seed, k, 3])
    hist: dict = {}
    combos = dict.fromkeys(ROUNDING_COMBOS, 0)
    modes = dict.fromkeys(SEARCH_MODES, 0)
    witnesses: dict = {}
    mismatches = 0
    max_diff = None
    done = 0
    it = 0
    while done < budget:
        n = min(batch, budget - done)
        mode = SEARCH_MODES[it % len(SEARCH_MODES)]
        it += 1
        ma, mb = _search_significands(mode, rng, n, k)
        model = mul_int_model(ma, mb, k)
        diff = model["diff"]
        ea = rng.integers(100, 155, n)
        eb = rng.integers(100, 155, n)
        sa, sb = rng.integers(0, 2, n), rng.integers(0, 2, n)
        wa, wb = _sig_words(ma, ea, sa), _sig_words(mb, eb, sb)
        if cross_check:
            r = fpu_batch(OpKind.MUL, wa, wb)
            v = check_batch(OpKind.MUL, wa, wb, r.words, r.flags, k)
            mismatches += int(np.sum((v.status == ST_SUP) | (v.diff != diff)))
        vals, counts = np.unique(diff, return_counts=True)
        for d, c in zip(vals.tolist(), counts.tolist()):
            hist[d] = hist.get(d, 0) + c
            if f"diff={d}" not in witnesses:
                i = int(np.argmax(diff == d))
                witnesses[f"diff={d}"] = (int(wa[i]), int(wb[i]))
        cc1 = model["common1"]
        codes = combo_codes(model)[cc1]
        cnt = np.bincount(codes, minlength=8)
        for i, name in enumerate(ROUNDING_COMBOS):
            combos[name] += int(cnt[i])
            if cnt[i] and f"combo={name}" not in witnesses:
                j = int(np.flatnonzero(cc1)[np.argmax(codes == i)])
                witnesses[f"combo={name}"] = (int(wa[j]), int(wb[j]))
        m = int(diff.max())
        max_diff = m if max_diff is None else max(max_diff, m)
        modes[mode] += n
        done += n
    return Diff4Report(k, budget, done, max_diff if max_diff is not None else 0,
                       dict(sorted(hist.items())), combos,
                       {name: combos[name] for name in CLAIMED_IMPOSSIBLE}, witnesses,
                       mismatches, modes)


__all__ = [
    "ExponentCase", "OracleTrace", "TermCheck", "TermReport", "CornerReport", "Diff4Report",
    "round_rne", "sqrt_rne", "exact_result", "trace", "verify_term_bounds", "term_intervals",
    "diff_range", "classify_rounding_cases", "mul_int_model", "round_product",
    "mul_corner_pattern", "gen_corner_add", "gen_corner_mul", "search_diff4_mul",
    "rational_json", "rational_from_json", "ROUNDING_COMBOS", "CLAIMED_IMPOSSIBLE",
]
