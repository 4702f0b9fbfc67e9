"""Test-data generators.

None of these is a randomness source for extraction seeds. They produce raw
data for tests, benchmarks and demonstrations, from numpy's PCG64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .bitcore import BitString
from .entropy import HomodyneModel, adc_quantize_array
from .errors import ParameterError

__all__ = [
    "SimSourceParams",
    "HomodyneSimulator",
    "simulate_homodyne",
    "simulate_analog",
    "sample_dtype",
    "duplicate_halves_source",
    "sv_target_mask",
    "sv_source_distribution",
    "sv_adversarial_source",
]


def sample_dtype(b: int) -> np.dtype:
    """Smallest unsigned dtype holding ``b``-bit sample values."""
    for dt in (np.uint8, np.uint16, np.uint32, np.uint64):
        if b <= 8 * np.dtype(dt).itemsize:
            return np.dtype(dt)
    raise ParameterError(f"sample width {b} exceeds 64 bits")


@dataclass(frozen=True)
class SimSourceParams:
    """AR(1) homodyne signal ``x_t = phi x_{t-1} + w_t`` quantized by the model's ADC."""

    model: HomodyneModel
    phi: float
    prng_seed: int

    def __post_init__(self):
        if not -1 < self.phi < 1:
            raise ParameterError(f"AR(1) coefficient must lie in (-1, 1), got {self.phi}")
        want = 1 - self.model.sigma_x2 / self.model.var_x
        if not math.isclose(self.phi * self.phi, want, rel_tol=1e-9, abs_tol=1e-12):
            raise ParameterError(
                f"phi^2 = {self.phi ** 2} does not match 1 - sigma_x2/var_x = {want}")
        if not 0 <= self.prng_seed < 2 ** 64:
            raise ParameterError("prng_seed must be a 64-bit unsigned value")

    @classmethod
    def from_model(cls, model: HomodyneModel, prng_seed: int, negative: bool = False):
        phi = math.sqrt(max(0.0, 1 - model.sigma_x2 / model.var_x))
        return cls(model=model, phi=-phi if negative else phi, prng_seed=prng_seed)


class HomodyneSimulator:
    """Stateful generator; successive draws continue the same trajectory.

    The first value comes from the stationary distribution, so the whole
    sequence is stationary. Output does not depend on how the draws are
    chunked.
    """

    def __init__(self, params: SimSourceParams):
        self.params = params
        self._rng = np.random.Generator(np.random.PCG64(params.prng_seed))
        self._prev: float | None = None

    def analog(self, count: int) -> np.ndarray:
        if count < 0:
            raise ParameterError("count must be non-negative")
        p, m = self.params, self.params.model
        w = self._rng.standard_normal(count) * math.sqrt(m.sigma_x2)
        if count == 0:
            return w
        if self._prev is None:
            w[0] *= math.sqrt(m.var_x / m.sigma_x2)
            zi = [0.0]
        else:
            zi = [p.phi * self._prev]
        x, _ = lfilter([1.0], [1.0, -p.phi], w, zi=zi)
        self._prev = float(x[-1])
        return x

    def samples(self, count: int) -> np.ndarray:
        """Quantized draws, stored as ADC level minus one (``0 .. 2^b - 1``)."""
        m = self.params.model
        j = adc_quantize_array(self.analog(count), m.b, m.R)
        return (j - 1).astype(sample_dtype(m.b))


def simulate_homodyne(params: SimSourceParams, count: int) -> np.ndarray:
    if count < 1:
        raise ParameterError("count must be >= 1")
    return HomodyneSimulator(params).samples(count)


def simulate_analog(params: SimSourceParams, count: int) -> np.ndarray:
    return HomodyneSimulator(params).analog(count)


def duplicate_halves_source(half_len_bits: int, prng_seed: int) -> BitString:
    """Uniform first half followed by an exact copy of it."""
    if half_len_bits < 1:
        raise ParameterError("half_len_bits must be >= 1")
    half = BitString.random(half_len_bits, np.random.default_rng(prng_seed))
    return half + half


def sv_target_mask(total_bits: int, target="parity") -> np.ndarray:
    """Boolean indicator over all ``2^total_bits`` strings of a half-size set.

    ``target`` is ``"parity"`` (odd weight), ``"msb"`` (last bit set), a
    callable on integer atoms, or an iterable of atoms. Atoms encode bit
    ``k`` of the string as bit ``k`` of the integer.
    """
    if total_bits > 24:
        raise ParameterError("explicit target sets are limited to 24 bits")
    atoms = np.arange(1 << total_bits, dtype=np.int64)
    if isinstance(target, str):
        if target == "parity":
            mask = (np.bitwise_count(atoms) & 1).astype(bool)
        elif target == "msb":
            mask = (atoms >> (total_bits - 1)).astype(bool)
        else:
            raise ParameterError(f"unknown target set {target!r}")
    elif callable(target):
        mask = np.array([bool(target(int(a))) for a in atoms])
    else:
        mask = np.zeros(atoms.size, bool)
        mask[np.fromiter(target, dtype=np.int64)] = True
    if mask.sum() != atoms.size // 2:
        raise ParameterError("target set must contain exactly half of all strings")
    return mask


def sv_source_distribution(b: int, N: int, delta: float, target="parity") -> np.ndarray:
    """Exact atom probabilities of the two-part mixture over ``b*N`` bits.

    With probability ``2^-delta`` the string is uniform on the target set,
    otherwise uniform on its complement.
    """
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    total = b * N
    mask = sv_target_mask(total, target)
    heavy = 2.0 ** -delta
    half = 2.0 ** (total - 1)
    return np.where(mask, heavy / half, (1 - heavy) / half)


def sv_adversarial_source(b: int, N: int, delta: float, target="parity",
                          prng_seed: int = 0, draws: int = 1) -> np.ndarray:
    """Draw ``draws`` strings of ``N`` samples from the mixture source.

    Returns an array of shape ``(draws, N)`` of ``b``-bit sample values.
    The built-in targets work for any length; explicit sets need
    ``b * N <= 24``.
    """
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    if b < 1 or N < 1 or b * N > 4096:
        raise ParameterError("need b, N >= 1 and b*N <= 4096")
    rng = np.random.default_rng(prng_seed)
    total = b * N
    in_set = rng.random(draws) < 2.0 ** -delta
    if isinstance(target, str) and target in ("parity", "msb"):
        bits = rng.integers(0, 2, size=(draws, total), dtype=np.uint8)
        if target == "parity":
            odd = bits[:, :-1].sum(axis=1) & 1
            bits[:, -1] = np.where(in_set, 1 - odd, odd)
        else:
            bits[:, -1] = in_set
    else:
        mask = sv_target_mask(total, target)
        members, others = np.flatnonzero(mask), np.flatnonzero(~mask)
        atoms = np.where(in_set, rng.choice(members, draws), rng.choice(others, draws))
        bits = ((atoms[:, None] >> np.arange(total)) & 1).astype(np.uint8)
    weights = np.left_shift(np.uint64(1), np.arange(b, dtype=np.uint64))
    per_sample = bits.reshape(draws, N, b).astype(np.uint64)
    return (per_sample * weights).sum(axis=2).astype(sample_dtype(b))
