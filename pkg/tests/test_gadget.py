from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from rbsextract.bitcore import BitString
from rbsextract.errors import ParameterError
from rbsextract.gadget import as_rate, extract, extract_expanded, make_gadget_params

rates = st.fractions(min_value=Fraction(1, 1000), max_value=1, max_denominator=1000).filter(
    lambda f: f > 0)


def seed_len_oracle(n_bits: int, rate: Fraction) -> int:
    # ceil(x) - 1 for x = n (2 den + num) / (2 den), in plain integers
    num, den = rate.numerator, rate.denominator
    top = n_bits * (2 * den + num)
    return (top + 2 * den - 1) // (2 * den) - 1


def test_reference_block_shape():
    g = make_gadget_params(496, Fraction(1074, 1600))
    assert (g.d, g.m, g.out_len) == (662, 829, 167)


def test_float_rate_is_read_as_decimal():
    assert as_rate(10.74 / 16) == Fraction(537, 800)
    assert as_rate("1074/1600") == Fraction(537, 800)


@pytest.mark.parametrize("bad", [0, -1, Fraction(3, 2), "x", float("nan"), None])
def test_rate_outside_unit_interval(bad):
    with pytest.raises(ParameterError):
        as_rate(bad)


@given(st.integers(1, 5000), rates)
def test_lengths_match_integer_oracle(n_bits, rate):
    g = make_gadget_params(n_bits, rate)
    assert g.d == seed_len_oracle(n_bits, rate)
    assert g.m == 2 * g.d - n_bits + 1
    assert g.out_len == g.m - g.d


@given(st.integers(1, 5000), rates)
def test_rounding_costs_less_than_half_a_bit(n_bits, rate):
    g = make_gadget_params(n_bits, rate)
    ideal_log2 = -rate * n_bits / 4
    assert ideal_log2 <= g.eps_log2 < ideal_log2 + Fraction(1, 2)


def test_expanded_output_ends_with_seed(rng):
    g = make_gadget_params(200, Fraction(1, 2))
    y, s = BitString.random(200, rng), BitString.random(g.d, rng)
    z = extract_expanded(g, y, s)
    assert len(z) == g.m
    assert z[g.out_len:] == s
    assert z[:g.out_len] == extract(g, y, s)


def test_length_errors(rng):
    g = make_gadget_params(40, 1)
    with pytest.raises(ParameterError):
        extract(g, BitString.zeros(39), BitString.zeros(g.d))
    with pytest.raises(ParameterError):
        extract(g, BitString.zeros(40), BitString.zeros(g.d + 1))
    with pytest.raises(ParameterError):
        make_gadget_params(0, 1)
