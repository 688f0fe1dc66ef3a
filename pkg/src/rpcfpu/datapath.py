"""Width-parameterised arithmetic datapaths shared by the FPU (p=23) and checker (p=k).

Every function takes a :class:`~rpcfpu.nets.Wires` and a net-name prefix and
drives each architecturally meaningful intermediate value through it.  All
arrays are int64; significands carry the hidden bit explicitly.
"""

from __future__ import annotations

import numpy as np

from .nets import Net, Wires, bit_length, bits_for, shl, shr, shr_sticky

EXP_MAX = 255
BIAS = 127

# significand position of the hidden bit inside each core's raw output
ADDER_EXTRA = 3   # guard, round, sticky below the LSB
NORM_PAD = 2      # rounder widens its input so at least three bits sit below the LSB


def rounder_nets(pre: str, p: int, ops, unit: str, denorm: bool) -> list[Net]:
    nets = [
        Net(f"{pre}.norm_shift", 7, ops, signed=True, unit=unit),
        Net(f"{pre}.norm_exp", 10, ops, signed=True, unit=unit),
    ]
    if denorm:
        nets.append(Net(f"{pre}.denorm_shift", 6, ops, unit=unit))
    nets += [
        Net(f"{pre}.grs", 3, ops, unit=unit),
        Net(f"{pre}.round_inc", 1, ops, unit=unit),
        Net(f"{pre}.rounded", p + 2, ops, unit=unit),
        Net(f"{pre}.round_carry", 1, ops, unit=unit),
    ]
    return nets


def normalize_round(w: Wires, pre: str, exp, sig, sticky, p: int, pos: int,
                    denorm: bool):
    """Normalise ``sig * 2**(exp - BIAS - pos)`` and round it to p fraction bits (RNE).

    Returns ``(exp, rounded, zero, tiny, inexact)`` where ``rounded`` holds the
    hidden bit at position p (absent for denormals) and ``exp`` is the biased
    exponent before encoding.  With ``denorm`` false the rounder never shifts
    into the subnormal range; callers detect range exit from ``exp``.
    """
    sig = (sig << NORM_PAD) | sticky
    pos += NORM_PAD
    zero = sig == 0
    shift = w(f"{pre}.norm_shift", np.where(zero, 0, bit_length(sig) - 1 - pos))
    sig = np.where(shift > 0, shr_sticky(sig, shift), shl(sig, -shift))
    exp = w(f"{pre}.norm_exp", np.where(zero, 0, exp + shift))

    drop = pos - p
    low_mask = (np.int64(1) << (drop - 1)) - 1
    tiny = np.zeros(sig.shape, dtype=bool)
    if denorm:
        # tininess is judged after rounding with an unbounded exponent
        top = sig >> drop
        g = (sig >> (drop - 1)) & 1
        inc = g & (((sig & low_mask) != 0) | (top & 1))
        carries = ((top + inc) >> (p + 1)) != 0
        tiny = ~zero & (exp < 1) & ~((exp == 0) & carries)
        dshift = w(f"{pre}.denorm_shift", np.clip(1 - exp, 0, pos + 2))
        sig = shr_sticky(sig, dshift)
        exp = np.where(dshift > 0, 1, exp)

    top = sig >> drop
    g = (sig >> (drop - 1)) & 1
    r = (sig >> (drop - 2)) & 1
    s = (sig & ((np.int64(1) << (drop - 2)) - 1)) != 0
    grs = w(f"{pre}.grs", (g << 2) | (r << 1) | s)
    g, rs = (grs >> 2) & 1, (grs & 3) != 0
    inc = w(f"{pre}.round_inc", g & (rs | (top & 1)))
    rounded = w(f"{pre}.rounded", top + inc)
    carry = w(f"{pre}.round_carry", rounded >> (p + 1))
    rounded = np.where(carry != 0, rounded >> 1, rounded)
    exp = exp + carry
    return exp, rounded, zero, tiny, grs != 0


# -- adder --------------------------------------------------------------------


def adder_nets(pre: str, p: int, ops, unit: str, denorm: bool) -> list[Net]:
    return [
        Net(f"{pre}.swap", 1, ops, unit=unit),
        Net(f"{pre}.exp_diff", 8, ops, unit=unit),
        Net(f"{pre}.align_shift", bits_for(p + ADDER_EXTRA + 1), ops, unit=unit),
        Net(f"{pre}.aligned", p + 1 + ADDER_EXTRA, ops, unit=unit),
        Net(f"{pre}.eff_sub", 1, ops, unit=unit),
        Net(f"{pre}.sum", p + 2 + ADDER_EXTRA, ops, unit=unit),
    ] + rounder_nets(pre, p, ops, unit, denorm)


def adder_core(w: Wires, pre: str, sa, ea, siga, sb, eb, sigb, p: int):
    """Signed-magnitude add of two (sign, exp, significand) operands.

    Returns ``(sign, exp, sum, pos)`` with the exact sum (sticky-jammed) whose
    hidden bit nominally sits at ``pos``.
    """
    a_big = (ea > eb) | ((ea == eb) & (siga >= sigb))
    swap = w(f"{pre}.swap", (~a_big).astype(np.int64)) != 0
    e_big, e_small = np.where(swap, eb, ea), np.where(swap, ea, eb)
    s_big, s_small = np.where(swap, sigb, siga), np.where(swap, siga, sigb)
    sign = np.where(swap, sb, sa)

    diff = w(f"{pre}.exp_diff", e_big - e_small)
    shamt = w(f"{pre}.align_shift", np.minimum(diff, p + ADDER_EXTRA + 1))
    aligned = w(f"{pre}.aligned", shr_sticky(s_small << ADDER_EXTRA, shamt))
    big = s_big << ADDER_EXTRA
    eff_sub = w(f"{pre}.eff_sub", sa ^ sb) != 0
    total = w(f"{pre}.sum", np.where(eff_sub, big - aligned, big + aligned))
    return sign, e_big, total, p + ADDER_EXTRA


# -- multiplier ---------------------------------------------------------------


def multiplier_nets(pre: str, p: int, ops, unit: str, denorm: bool) -> list[Net]:
    return [
        Net(f"{pre}.sign", 1, ops, unit=unit),
        Net(f"{pre}.exp_sum", 10, ops, signed=True, unit=unit),
        Net(f"{pre}.product", 2 * p + 2, ops, unit=unit),
    ] + rounder_nets(pre, p, ops, unit, denorm)


def multiplier_core(w: Wires, pre: str, sa, ea, siga, sb, eb, sigb, p: int):
    """Integer significand product; returns ``(sign, exp, product, pos)``."""
    sign = w(f"{pre}.sign", sa ^ sb)
    exp = w(f"{pre}.exp_sum", ea + eb - BIAS)
    prod = w(f"{pre}.product", siga * sigb)
    return sign, exp, prod, 2 * p


# -- divider (restoring) ------------------------------------------------------


def divider_nets(pre: str, p: int, ops, unit: str) -> list[Net]:
    lz = bits_for(p + 1)
    return [
        Net(f"{pre}.sign", 1, ops, unit=unit),
        Net(f"{pre}.lz_a", lz, ops, unit=unit),
        Net(f"{pre}.lz_b", lz, ops, unit=unit),
        Net(f"{pre}.exp_diff", 10, ops, signed=True, unit=unit),
        Net(f"{pre}.pre_shift", 1, ops, unit=unit),
        Net(f"{pre}.remainder", p + 2, ops, unit=unit),
        Net(f"{pre}.quotient", p + 3, ops, unit=unit),
    ] + rounder_nets(pre, p, ops, unit, True)


def leading_zeros(sig, p: int):
    """Left shift that moves the MSB of a (possibly subnormal) significand to bit p."""
    return np.clip(p + 1 - bit_length(sig), 0, p + 1)


def divider_core(w: Wires, pre: str, sa, ea, siga, sb, eb, sigb, p: int):
    sign = w(f"{pre}.sign", sa ^ sb)
    lza = w(f"{pre}.lz_a", leading_zeros(siga, p))
    lzb = w(f"{pre}.lz_b", leading_zeros(sigb, p))
    siga, sigb = shl(siga, lza), shl(sigb, lzb)
    exp = w(f"{pre}.exp_diff", (ea - lza) - (eb - lzb) + BIAS)
    # quotient of significands lies in (1/2, 2): at most one left shift
    pre_shift = w(f"{pre}.pre_shift", (siga < sigb).astype(np.int64))
    rem = siga << pre_shift
    exp = exp - pre_shift
    quo = np.zeros_like(rem)
    for _ in range(p + 3):
        ge = rem >= sigb
        rem = np.where(ge, rem - sigb, rem)
        quo = w(f"{pre}.quotient", (quo << 1) | ge)
        rem = w(f"{pre}.remainder", rem << 1)
    return sign, exp, quo, (rem != 0).astype(np.int64), p + 2


# -- square root (digit by digit) --------------------------------------------


def sqrt_nets(pre: str, p: int, ops, unit: str) -> list[Net]:
    return [
        Net(f"{pre}.lz", bits_for(p + 1), ops, unit=unit),
        Net(f"{pre}.exp_odd", 1, ops, unit=unit),
        Net(f"{pre}.exp_half", 8, ops, signed=True, unit=unit),
        Net(f"{pre}.remainder", p + 5, ops, unit=unit),
        Net(f"{pre}.root", p + 4, ops, unit=unit),
    ] + rounder_nets(pre, p, ops, unit, True)


def sqrt_core(w: Wires, pre: str, eb, sigb, p: int):
    lz = w(f"{pre}.lz", leading_zeros(sigb, p))
    sig = shl(sigb, lz)
    e = eb - lz - BIAS
    odd = w(f"{pre}.exp_odd", e & 1)
    sig = sig << odd
    half = w(f"{pre}.exp_half", (e - odd) >> 1)
    nbits = p + 4
    rad = sig << (p + 6)
    rem = np.zeros_like(rad)
    root = np.zeros_like(rad)
    for i in reversed(range(nbits)):
        rem = (rem << 2) | (shr(rad, 2 * i) & 3)
        trial = (root << 2) | 1
        ge = rem >= trial
        rem = w(f"{pre}.remainder", np.where(ge, rem - trial, rem))
        root = w(f"{pre}.root", (root << 1) | ge)
    return half + BIAS, root, (rem != 0).astype(np.int64), p + 3
