"""Bit-level views of binary32 words and their truncated (9+k)-bit checker forms."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

SIGN_SHIFT = 31
EXP_SHIFT = 23
FRAC_BITS = 23
FRAC_MASK = (1 << FRAC_BITS) - 1
EXP_MASK = 0xFF
BIAS = 127
WORD_MASK = 0xFFFFFFFF

CANONICAL_NAN = 0x7FC00000
POS_INF = 0x7F800000


class OperandClass(enum.Enum):
    NORMAL = "Normal"
    ZERO = "Zero"
    DENORM = "Denorm"
    INFINITY = "Infinity"
    NAN = "NaN"


@dataclass(frozen=True)
class PackedFloat32:
    """A raw binary32 word with its sign / exponent / fraction fields."""

    word: int

    def __post_init__(self):
        if not 0 <= self.word <= WORD_MASK:
            raise ValueError(f"word out of range: {self.word:#x}")

    @property
    def sign_bit(self) -> int:
        return self.word >> SIGN_SHIFT

    @property
    def exp_bits(self) -> int:
        return (self.word >> EXP_SHIFT) & EXP_MASK

    @property
    def fraction(self) -> int:
        return self.word & FRAC_MASK

    @property
    def exponent(self) -> int:
        """Unbiased exponent; only meaningful for normal values."""
        return self.exp_bits - BIAS

    def to_float(self) -> float:
        return struct.unpack("<f", struct.pack("<I", self.word))[0]

    def __str__(self) -> str:
        return format_hex(self.word)


@dataclass(frozen=True)
class ReducedFloat:
    """Sign, 8-bit biased exponent and k-bit fraction: the checker's number format."""

    k: int
    sign_bit: int
    exp_bits: int
    fraction_k: int

    def __post_init__(self):
        _check_k(self.k)
        if self.sign_bit not in (0, 1):
            raise ValueError("sign_bit must be 0 or 1")
        if not 0 <= self.exp_bits <= EXP_MASK:
            raise ValueError(f"exp_bits out of range: {self.exp_bits}")
        if not 0 <= self.fraction_k < (1 << self.k):
            raise ValueError(f"fraction_k out of range for k={self.k}: {self.fraction_k}")

    @property
    def magnitude_bits(self) -> int:
        """The {exponent, fraction} field read as one unsigned integer."""
        return (self.exp_bits << self.k) | self.fraction_k

    @property
    def mantissa(self) -> Fraction:
        return 1 + Fraction(self.fraction_k, 1 << self.k)

    def value(self) -> Fraction:
        v = self.mantissa * Fraction(2) ** (self.exp_bits - BIAS)
        return -v if self.sign_bit else v


def _check_k(k: int) -> None:
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= FRAC_BITS:
        raise ValueError(f"k must be an integer in [1, 23], got {k!r}")


def unpack(word: int) -> PackedFloat32:
    return PackedFloat32(int(word))


def pack(sign: int, exp_bits: int, fraction: int) -> int:
    if sign not in (0, 1):
        raise ValueError(f"sign must be 0 or 1, got {sign}")
    if not 0 <= exp_bits <= EXP_MASK:
        raise ValueError(f"exp_bits must fit in 8 bits, got {exp_bits}")
    if not 0 <= fraction <= FRAC_MASK:
        raise ValueError(f"fraction must fit in 23 bits, got {fraction}")
    return (sign << SIGN_SHIFT) | (exp_bits << EXP_SHIFT) | fraction


def classify(x: PackedFloat32) -> OperandClass:
    e, f = x.exp_bits, x.fraction
    if e == 0:
        return OperandClass.ZERO if f == 0 else OperandClass.DENORM
    if e == EXP_MASK:
        return OperandClass.INFINITY if f == 0 else OperandClass.NAN
    return OperandClass.NORMAL


def _require_normal(x: PackedFloat32) -> None:
    cls = classify(x)
    if cls is not OperandClass.NORMAL:
        raise ValueError(f"{x} is {cls.value}; a normal operand is required")


def truncate_to_reduced(x: PackedFloat32, k: int) -> ReducedFloat:
    """Keep the top k fraction bits of a normal value. No rounding."""
    _check_k(k)
    _require_normal(x)
    return ReducedFloat(k, x.sign_bit, x.exp_bits, x.fraction >> (FRAC_BITS - k))


def mantissa_parts(x: PackedFloat32, k: int) -> tuple[Fraction, Fraction, Fraction]:
    """Return (M, M_H, M_L): full mantissa, its k-bit truncation and the remainder."""
    _check_k(k)
    _require_normal(x)
    m = 1 + Fraction(x.fraction, 1 << FRAC_BITS)
    m_hi = 1 + Fraction(x.fraction >> (FRAC_BITS - k), 1 << k)
    return m, m_hi, m - m_hi


def exact_value(x: PackedFloat32) -> Fraction:
    """Exact rational value of a finite word (normal, denormal or zero)."""
    e, f = x.exp_bits, x.fraction
    if e == EXP_MASK:
        raise ValueError(f"{x} is not finite")
    if e == 0:
        v = Fraction(f, 1 << FRAC_BITS) * Fraction(2) ** (1 - BIAS)
    else:
        v = (1 + Fraction(f, 1 << FRAC_BITS)) * Fraction(2) ** (e - BIAS)
    return -v if x.sign_bit else v


def format_hex(word: int) -> str:
    return f"0x{int(word) & WORD_MASK:08X}"


def parse_hex(text: str) -> int:
    """Parse the canonical 0xXXXXXXXX form (prefix optional, case-insensitive)."""
    s = text.strip().lower()
    if s.startswith("0x"):
        s = s[2:]
    if not s or len(s) > 8 or any(c not in "0123456789abcdef" for c in s):
        raise ValueError(f"not a 32-bit hex word: {text!r}")
    return int(s, 16)


def float_to_word(value: float) -> int:
    return struct.unpack("<I", struct.pack("<f", value))[0]


# -- array helpers used by the batch datapaths -------------------------------


def as_words(words) -> np.ndarray:
    """Coerce scalars / sequences / arrays of binary32 words to an int64 array."""
    arr = np.asarray(words)
    if arr.dtype == np.float32:
        arr = arr.view(np.uint32)
    arr = np.atleast_1d(arr).astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() > WORD_MASK):
        raise ValueError("words must be 32-bit unsigned values")
    return arr


def split_fields(words: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (words >> SIGN_SHIFT) & 1, (words >> EXP_SHIFT) & EXP_MASK, words & FRAC_MASK


def is_normal(words: np.ndarray) -> np.ndarray:
    e = (words >> EXP_SHIFT) & EXP_MASK
    return (e != 0) & (e != EXP_MASK)


def classify_array(words: np.ndarray) -> np.ndarray:
    """Vectorised classify(); returns an object array of OperandClass members."""
    _, e, f = split_fields(as_words(words))
    out = np.full(e.shape, OperandClass.NORMAL, dtype=object)
    out[(e == 0) & (f == 0)] = OperandClass.ZERO
    out[(e == 0) & (f != 0)] = OperandClass.DENORM
    out[(e == EXP_MASK) & (f == 0)] = OperandClass.INFINITY
    out[(e == EXP_MASK) & (f != 0)] = OperandClass.NAN
    return out


def words_to_float32(words) -> np.ndarray:
    return as_words(words).astype(np.uint32).view(np.float32)
