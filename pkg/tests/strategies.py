"""Hypothesis strategies shared by the property tests."""

from __future__ import annotations

from hypothesis import strategies as st

words = st.integers(0, 0xFFFFFFFF)
ks = st.integers(1, 23)
fractions = st.one_of(st.integers(0, (1 << 23) - 1),
                      st.integers(0, 23).map(lambda n: (1 << 23) - (1 << n)),
                      st.integers(0, 22).map(lambda n: 1 << n))


@st.composite
def normals(draw, exp_lo=1, exp_hi=254, sign=None):
    s = draw(st.integers(0, 1)) if sign is None else sign
    e = draw(st.integers(exp_lo, exp_hi))
    return (s << 31) | (e << 23) | draw(fractions)
