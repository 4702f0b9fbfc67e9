"""Toeplitz-hashing gadget used inside every block.

For an ``n``-bit block with min-entropy rate ``delta`` the gadget draws a
``d``-bit seed with ``d = ceil((1 + delta/2) n) - 1``. The plain extractor
outputs ``d - n + 1`` bits; the expanded one appends the seed, giving
``m = 2d - n + 1`` bits whose last ``d`` bits are the seed itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

from .bitcore import BitString, ToeplitzSpec, toeplitz_matvec_packed
from .errors import ParameterError

__all__ = ["GadgetParams", "as_rate", "make_gadget_params", "extract", "extract_expanded"]


def as_rate(delta) -> Fraction:
    """Coerce a min-entropy rate to an exact fraction in (0, 1].

    Accepts ``Fraction``/``int``, strings such as ``"1074/1600"`` or
    ``"0.67125"``, and floats. Floats go through their shortest decimal
    repr, so ``10.74 / 16`` becomes exactly ``537/800``.
    """
    if isinstance(delta, Rational):
        rate = Fraction(delta)
    elif isinstance(delta, float):
        if not math.isfinite(delta):
            raise ParameterError(f"delta must be finite, got {delta}")
        rate = Fraction(repr(delta))
    elif isinstance(delta, str):
        try:
            rate = Fraction(delta.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ParameterError(f"cannot parse delta {delta!r}") from exc
    else:
        raise ParameterError(f"unsupported delta type {type(delta).__name__}")
    if not 0 < rate <= 1:
        raise ParameterError(f"delta must lie in (0, 1], got {rate}")
    return rate


def seed_length(n_bits: int, delta: Fraction) -> int:
    """``ceil((1 + delta/2) * n_bits) - 1`` in exact arithmetic."""
    return math.ceil((1 + delta / 2) * n_bits) - 1


@dataclass(frozen=True)
class GadgetParams:
    n_bits: int
    delta: Fraction
    d: int
    m: int
    eps_log2: Fraction

    @property
    def out_len(self) -> int:
        """Bits produced by the plain Toeplitz extractor."""
        return self.d - self.n_bits + 1

    @property
    def eps(self) -> float:
        return 2.0 ** float(self.eps_log2)

    @property
    def toeplitz(self) -> ToeplitzSpec:
        return ToeplitzSpec(n=self.n_bits, u=self.out_len)


def make_gadget_params(n_bits: int, delta) -> GadgetParams:
    """Gadget parameters for ``n_bits`` input bits at rate ``delta``.

    ``eps`` is the leftover-hash error of the rounded seed length,
    ``2^-((delta n + n - d - 1)/2)``. It can exceed ``2^(-delta n/4)`` by
    at most a factor ``sqrt(2)`` because of rounding.
    """
    if int(n_bits) != n_bits or n_bits < 1:
        raise ParameterError(f"n_bits must be a positive integer, got {n_bits}")
    n_bits = int(n_bits)
    rate = as_rate(delta)
    d = seed_length(n_bits, rate)
    if d < n_bits:
        raise ParameterError(f"seed length {d} shorter than input length {n_bits}")
    eps_log2 = -(rate * n_bits + n_bits - d - 1) / 2
    return GadgetParams(n_bits=n_bits, delta=rate, d=d, m=2 * d - n_bits + 1, eps_log2=eps_log2)


def _check(params: GadgetParams, y: BitString, s: BitString) -> None:
    if len(y) != params.n_bits:
        raise ParameterError(f"input has {len(y)} bits, expected {params.n_bits}")
    if len(s) != params.d:
        raise ParameterError(f"seed has {len(s)} bits, expected {params.d}")


def extract(params: GadgetParams, y: BitString, s: BitString) -> BitString:
    """Plain Toeplitz hash ``T_s . y``, ``d - n + 1`` bits."""
    _check(params, y, s)
    return toeplitz_matvec_packed(params.toeplitz, s, y)


def extract_expanded(params: GadgetParams, y: BitString, s: BitString) -> BitString:
    """``T_s . y`` followed by the seed, ``m`` bits in total."""
    return extract(params, y, s) + s
