"""Bit strings and Toeplitz products over GF(2).

A :class:`BitString` stores its bits packed LSB-first: bit ``i`` is bit
``i % 8`` of byte ``i // 8``. This is also the on-disk layout for raw data,
seeds and extracted output, so files map onto bit strings without
reordering.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _kernels
from .errors import ParameterError

__all__ = [
    "BitString",
    "ToeplitzSpec",
    "ToeplitzKernel",
    "toeplitz_kernel",
    "toeplitz_matvec",
    "toeplitz_matvec_packed",
]


def _nbytes(nbits: int) -> int:
    return (nbits + 7) // 8


class BitString:
    """Immutable sequence of bits with an explicit length.

    Parameters
    ----------
    data : bytes-like or uint8 array
        Packed bits, LSB-first. Extra bytes beyond ``length`` are dropped and
        padding bits in the last byte are cleared.
    length : int, optional
        Number of bits; defaults to ``8 * len(data)``.
    """

    __slots__ = ("_data", "_len")

    def __init__(self, data=b"", length: int | None = None):
        if isinstance(data, np.ndarray):
            buf = np.ascontiguousarray(data, dtype=np.uint8).ravel()
        else:
            buf = np.frombuffer(bytes(data), dtype=np.uint8)
        if length is None:
            length = 8 * buf.size
        length = int(length)
        if length < 0 or buf.size < _nbytes(length):
            raise ParameterError(
                f"{buf.size} bytes cannot hold {length} bits")
        buf = buf[: _nbytes(length)].copy()
        self._init(buf, length)

    def _init(self, buf: np.ndarray, length: int) -> None:
        if length % 8:
            buf[-1] &= (1 << (length % 8)) - 1
        buf.flags.writeable = False
        self._data = buf
        self._len = length

    @classmethod
    def _wrap(cls, buf: np.ndarray, length: int) -> "BitString":
        # Takes ownership of buf (no copy).
        obj = cls.__new__(cls)
        obj._init(buf, length)
        return obj

    # constructors

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitString":
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
        arr = arr.ravel()
        if arr.size and (arr.min() < 0 or arr.max() > 1):
            raise ParameterError("bits must be 0 or 1")
        packed = np.packbits(arr.astype(np.uint8), bitorder="little")
        return cls._wrap(packed, int(arr.size))

    @classmethod
    def from_str(cls, text: str) -> "BitString":
        """Parse ``'0110'`` (bit 0 first); spaces and underscores are ignored."""
        text = text.replace(" ", "").replace("_", "")
        if set(text) - {"0", "1"}:
            raise ParameterError(f"not a bit string: {text!r}")
        return cls.from_bits([int(c) for c in text])

    @classmethod
    def zeros(cls, length: int) -> "BitString":
        if length < 0:
            raise ParameterError("length must be non-negative")
        return cls._wrap(np.zeros(_nbytes(length), np.uint8), length)

    @classmethod
    def random(cls, length: int, rng: np.random.Generator) -> "BitString":
        """Bits from a numpy generator. Test data only, never an extraction seed."""
        raw = rng.integers(0, 256, _nbytes(length), dtype=np.uint8)
        return cls._wrap(raw, length)

    @classmethod
    def concat(cls, parts: Iterable["BitString"]) -> "BitString":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.zeros(0)
        total = sum(len(p) for p in parts)
        if all(len(p) % 8 == 0 for p in parts[:-1]):
            buf = np.concatenate([p._data for p in parts])
            return cls._wrap(buf, total)
        arr = np.concatenate([p.to_array() for p in parts])
        return cls._wrap(np.packbits(arr, bitorder="little"), total)

    # views

    @property
    def data(self) -> np.ndarray:
        """Read-only packed bytes (LSB-first, zero padding)."""
        return self._data

    def to_bytes(self) -> bytes:
        return self._data.tobytes()

    def to_array(self) -> np.ndarray:
        """Unpacked copy as a uint8 array of 0/1 values."""
        return np.unpackbits(self._data, count=self._len, bitorder="little")

    def words(self, pad_words: int = 0) -> np.ndarray:
        """Little-endian uint64 words, with ``pad_words`` extra zero words."""
        nwords = (self._len + 63) // 64 + pad_words
        buf = np.zeros(nwords * 8, np.uint8)
        buf[: self._data.size] = self._data
        return buf.view("<u8")

    def count(self) -> int:
        """Number of one bits."""
        return int(np.bitwise_count(self._data).sum(dtype=np.int64))

    # sequence protocol

    def __len__(self) -> int:
        return self._len

    def __getitem__(self, key):
        if isinstance(key, slice):
            start, stop, step = key.indices(self._len)
            if step != 1:
                return BitString.from_bits(self.to_array()[start:stop:step])
            stop = max(stop, start)
            length = stop - start
            if start % 8 == 0:
                return BitString._wrap(
                    self._data[start // 8: start // 8 + _nbytes(length)].copy(), length)
            lo = start // 8
            chunk = np.unpackbits(self._data[lo: _nbytes(stop)], bitorder="little")
            chunk = chunk[start - 8 * lo: stop - 8 * lo]
            return BitString._wrap(np.packbits(chunk, bitorder="little"), length)
        i = int(key)
        if i < 0:
            i += self._len
        if not 0 <= i < self._len:
            raise IndexError(f"bit index {key} out of range for length {self._len}")
        return int((self._data[i >> 3] >> (i & 7)) & 1)

    def __iter__(self):
        return iter(self.to_array().tolist())

    def __add__(self, other: "BitString") -> "BitString":
        if not isinstance(other, BitString):
            return NotImplemented
        return BitString.concat([self, other])

    def __xor__(self, other: "BitString") -> "BitString":
        if not isinstance(other, BitString):
            return NotImplemented
        if len(other) != self._len:
            raise ParameterError("xor of bit strings with different lengths")
        return BitString._wrap(self._data ^ other._data, self._len)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return self._len == other._len and np.array_equal(self._data, other._data)

    def __hash__(self) -> int:
        return hash((self._len, self._data.tobytes()))

    def __repr__(self) -> str:
        if self._len <= 64:
            return f"BitString('{''.join(map(str, self.to_array()))}')"
        head = "".join(map(str, self[:32].to_array()))
        return f"BitString(len={self._len}, head='{head}...')"


@dataclass(frozen=True)
class ToeplitzSpec:
    """Shape of a ``u x n`` Toeplitz matrix over GF(2).

    The seed array holds ``(s_{1-u}, ..., s_{n-1})``; array index ``k`` is
    ``s_{k-(u-1)}`` and entry ``T[i][j]`` (1-based) is ``s_{j-i}``.
    """

    n: int
    u: int

    def __post_init__(self):
        if int(self.n) != self.n or int(self.u) != self.u or self.n < 1 or self.u < 1:
            raise ParameterError(f"Toeplitz shape needs n, u >= 1 (got n={self.n}, u={self.u})")

    @property
    def seed_len(self) -> int:
        return self.u + self.n - 1


def _check_lengths(spec: ToeplitzSpec, seed: BitString, x: BitString) -> None:
    if len(seed) != spec.seed_len:
        raise ParameterError(f"seed has {len(seed)} bits, expected {spec.seed_len}")
    if len(x) != spec.n:
        raise ParameterError(f"input has {len(x)} bits, expected {spec.n}")


def toeplitz_matvec(spec: ToeplitzSpec, seed: BitString, x: BitString) -> BitString:
    """Reference product ``T_s . x`` on unpacked bits."""
    _check_lengths(spec, seed, x)
    s = seed.to_array()
    # Row i (0-based) is s[u-1-i : u-1-i+n].
    rows = sliding_window_view(s, spec.n)[::-1]
    out = (rows & x.to_array()).sum(axis=1) & 1
    return BitString.from_bits(out)


def toeplitz_matvec_packed(spec: ToeplitzSpec, seed: BitString, x: BitString) -> BitString:
    """Word-parallel product: 64-bit AND of each row with the input, then parity."""
    _check_lengths(spec, seed, x)
    out = np.zeros((spec.u + 63) // 64, np.uint64)
    _kernels.toeplitz_window_matvec(seed.words(2), x.words(), spec.n, spec.u, out)
    return BitString._wrap(out.view(np.uint8)[: _nbytes(spec.u)].copy(), spec.u)


class ToeplitzKernel:
    """A Toeplitz matrix materialized once for repeated products.

    Columns of ``T_s`` are packed into words and folded into one 256-entry
    lookup table per input byte, so each product costs one table read and
    XOR per input byte and output word.
    """

    # sub-chunk size (blocks) for the bit-unaligned path
    _CHUNK = 1 << 15

    def __init__(self, spec: ToeplitzSpec, seed: BitString):
        if len(seed) != spec.seed_len:
            raise ParameterError(f"seed has {len(seed)} bits, expected {spec.seed_len}")
        self.spec = spec
        self.seed = seed
        n, u = spec.n, spec.u
        self.block_bytes = _nbytes(n)
        groups = (u + 255) // 256
        s = seed.to_array()
        cols = np.zeros((self.block_bytes * 8, groups * 256), np.uint8)
        # column j, row i  ->  s[j + u - 1 - i]
        cols[:n, :u] = sliding_window_view(s, u)[:, ::-1]
        packed = np.packbits(cols, axis=1, bitorder="little").view("<u8")
        packed = packed.reshape(self.block_bytes, 8, groups, 4).transpose(2, 0, 1, 3)
        tables = np.zeros((groups, self.block_bytes, 256, 4), np.uint64)
        for k in range(8):
            lo = 1 << k
            tables[:, :, lo: 2 * lo] = tables[:, :, :lo] ^ packed[:, :, k, None, :]
        self.tables = tables

    def matvec(self, x: BitString) -> BitString:
        if len(x) != self.spec.n:
            raise ParameterError(f"input has {len(x)} bits, expected {self.spec.n}")
        return self.apply_blocks(x, 1)

    def apply_blocks(self, raw: BitString, nblocks: int, workers: int = 1) -> BitString:
        """Multiply each consecutive ``n``-bit block of ``raw`` and concatenate.

        Blocks are split into word-aligned ranges handed to ``workers``
        threads; the compiled kernel releases the GIL.
        """
        n, u = self.spec.n, self.spec.u
        if nblocks < 0 or nblocks * n > len(raw):
            raise ParameterError(f"raw data holds fewer than {nblocks} blocks of {n} bits")
        total = nblocks * u
        dest = np.zeros((total + 63) // 64 + 1, np.uint64)
        if nblocks:
            ranges = _split_ranges(nblocks, max(1, int(workers)))
            if len(ranges) == 1:
                self._run(raw, *ranges[0], dest)
            else:
                with ThreadPoolExecutor(len(ranges)) as pool:
                    list(pool.map(lambda r: self._run(raw, r[0], r[1], dest), ranges))
        # the view keeps a few spare padding bytes alive instead of copying the output
        return BitString._wrap(dest.view(np.uint8)[: _nbytes(total)], total)

    def _run(self, raw: BitString, b0: int, b1: int, dest: np.ndarray) -> None:
        n, u, nb = self.spec.n, self.spec.u, self.block_bytes
        if n % 8 == 0:
            _kernels.table_extract(raw.data, b0, b1 - b0, nb, self.tables, u, dest, b0 * u)
            return
        for c0 in range(b0, b1, self._CHUNK):
            c1 = min(b1, c0 + self._CHUNK)
            lo = (c0 * n) // 8
            bits = np.unpackbits(raw.data[lo: _nbytes(c1 * n)], bitorder="little")
            off = c0 * n - 8 * lo
            blocks = bits[off: off + (c1 - c0) * n].reshape(c1 - c0, n)
            data = np.packbits(blocks, axis=1, bitorder="little").ravel()
            _kernels.table_extract(data, 0, c1 - c0, nb, self.tables, u, dest, c0 * u)


def _split_ranges(nblocks: int, workers: int) -> list[tuple[int, int]]:
    # Boundaries at multiples of 64 blocks keep every range's output word-aligned.
    units = (nblocks + 63) // 64
    workers = min(workers, units)
    bounds = [min(nblocks, 64 * (units * w // workers)) for w in range(workers + 1)]
    return [(a, b) for a, b in zip(bounds, bounds[1:]) if b > a]


@lru_cache(maxsize=16)
def toeplitz_kernel(spec: ToeplitzSpec, seed: BitString) -> ToeplitzKernel:
    """Cached :class:`ToeplitzKernel` per (shape, seed)."""
    return ToeplitzKernel(spec, seed)
