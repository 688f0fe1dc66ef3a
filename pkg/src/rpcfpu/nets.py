"""Named datapath nets, stuck-at fault sites and the wire model that forces them.

Every intermediate value in the soft FPU and the checker is driven through a
:class:`Wires` object.  A net has a fixed width (and optional two's-complement
signedness); a stuck-at fault forces one bit of it each time the net is driven.
"""

from __future__ import annotations

import contextlib
import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np


class OpKind(str, enum.Enum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"
    SQRT = "sqrt"

    @classmethod
    def parse(cls, value) -> "OpKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown operation {value!r}; expected one of "
                             f"{[o.value for o in cls]}") from None


ALL_OPS = tuple(OpKind)


@dataclass(frozen=True)
class Net:
    name: str
    width: int
    op_kinds: frozenset
    signed: bool = False
    unit: str = "fpu"


@dataclass(frozen=True, order=True)
class FaultSite:
    net_name: str
    bit_index: int
    width: int = field(compare=False)
    op_kinds: frozenset = field(compare=False, default=frozenset())
    unit: str = field(compare=False, default="fpu")

    def __post_init__(self):
        if not 0 <= self.bit_index < self.width:
            raise ValueError(f"bit {self.bit_index} outside net {self.net_name} "
                             f"of width {self.width}")

    @property
    def label(self) -> str:
        return f"{self.net_name}[{self.bit_index}]"


@dataclass(frozen=True)
class FaultSpec:
    site: FaultSite
    stuck_value: int

    def __post_init__(self):
        if self.stuck_value not in (0, 1):
            raise ValueError("stuck_value must be 0 or 1")

    @property
    def label(self) -> str:
        return f"{self.site.label}/sa{self.stuck_value}"


class UnknownFaultSite(ValueError):
    pass


def sites_of(nets: Iterable[Net]) -> list[FaultSite]:
    """Expand nets into one FaultSite per bit, preserving net order, LSB first."""
    out = []
    for n in nets:
        for bit in range(n.width):
            out.append(FaultSite(n.name, bit, n.width, n.op_kinds, n.unit))
    return out


def format_catalog(nets: Iterable[Net]) -> str:
    """Text table of net_name, width, op_kinds (one net per line)."""
    rows = ["net_name\twidth\top_kinds"]
    for n in nets:
        kinds = ",".join(o.value for o in ALL_OPS if o in n.op_kinds)
        rows.append(f"{n.name}\t{n.width}\t{kinds}")
    return "\n".join(rows) + "\n"


_STRICT = False


@contextlib.contextmanager
def strict_widths():
    """Raise if any fault-free net value does not fit its declared width."""
    global _STRICT
    prev, _STRICT = _STRICT, True
    try:
        yield
    finally:
        _STRICT = prev


class NetWidthError(AssertionError):
    pass


class Wires:
    """Drives values onto named nets, applying any stuck-at faults on the way.

    With no faults the values pass through untouched.  With faults active every
    net is also truncated to its width, like a physical bus, so a corrupted
    value cannot grow beyond what the hardware could carry.
    """

    def __init__(self, catalog: Mapping[str, Net], faults: Iterable[FaultSpec] = ()):
        self.catalog = catalog
        self.masks: dict[str, tuple[int, int]] = {}
        for f in faults:
            net = catalog.get(f.site.net_name)
            if net is None or f.site.bit_index >= net.width:
                raise UnknownFaultSite(f"fault site {f.site.label} is not part of this datapath")
            clear, setm = self.masks.get(net.name, (0, 0))
            bit = 1 << f.site.bit_index
            if f.stuck_value:
                setm |= bit
            else:
                clear |= bit
            self.masks[net.name] = (clear, setm)
        self.faulty = bool(self.masks)
        self.probe: dict[str, np.ndarray] | None = None

    def __call__(self, name: str, value) -> np.ndarray:
        net = self.catalog[name]
        value = np.asarray(value, dtype=np.int64)
        if _STRICT and not self.faulty:
            _assert_fits(net, value)
        if self.faulty:
            full = (1 << net.width) - 1
            v = value & full
            m = self.masks.get(name)
            if m is not None:
                v = (v & ~m[0]) | m[1]
            if net.signed:
                half = 1 << (net.width - 1)
                v = np.where(v >= half, v - (1 << net.width), v)
            value = v
        if self.probe is not None:
            self.probe[name] = value
        return value


def _assert_fits(net: Net, value: np.ndarray) -> None:
    if value.size == 0:
        return
    lo, hi = int(value.min()), int(value.max())
    if net.signed:
        ok = -(1 << (net.width - 1)) <= lo and hi < (1 << (net.width - 1))
    else:
        ok = lo >= 0 and hi < (1 << net.width)
    if not ok:
        raise NetWidthError(f"net {net.name} (width {net.width}, signed={net.signed}) "
                            f"carries values in [{lo}, {hi}]")


# -- shift helpers on int64 arrays -------------------------------------------


def shr(x: np.ndarray, n) -> np.ndarray:
    n = np.clip(n, 0, 63)
    return np.where(n >= 63, 0, x >> n)


def shr_sticky(x: np.ndarray, n) -> np.ndarray:
    """Logical right shift that ORs every shifted-out bit into the result LSB."""
    n = np.clip(n, 0, 63)
    kept = np.where(n >= 63, 0, x >> n)
    lost = x - (kept << n)
    return kept | (lost != 0)


def shl(x: np.ndarray, n) -> np.ndarray:
    return x << np.clip(n, 0, 63)


def bit_length(x: np.ndarray) -> np.ndarray:
    """Vectorised int.bit_length() for non-negative int64 values."""
    y = np.asarray(x, dtype=np.int64).copy()
    n = np.zeros_like(y)
    for s in (32, 16, 8, 4, 2, 1):
        m = y >= (np.int64(1) << s)
        y = np.where(m, y >> s, y)
        n += m * s
    return n + (y > 0)


def bits_for(value: int) -> int:
    return max(1, int(value).bit_length())
