"""Online block-wise extractors and the binary file formats they consume.

An :class:`ExtractorState` accepts raw samples in arbitrary chunks and emits
the output of every block as soon as the block is complete. Each block's
expanded gadget output is cut into emitted bits and the seed of the next
block; with the expanded Toeplitz gadget and equal blocks the next seed is
the current one, so equal-block extraction parallelizes over blocks.
"""
from __future__ import annotations

import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bitcore import BitString, toeplitz_kernel
from .errors import ParameterError, StateError, UnsupportedError
from .gadget import extract_expanded
from .planner import EqPlan, NeqPlan, neq_error_after_k, neq_gadget_error_after_k

__all__ = [
    "ExtractionSummary",
    "ExtractorState",
    "extract_eq_parallel",
    "samples_to_bits",
    "bits_to_samples",
    "read_bits_file",
    "write_bits_file",
    "iter_raw_file",
    "count_raw_samples",
    "BitFileWriter",
]

log = logging.getLogger(__name__)


def samples_to_bits(samples, b: int) -> BitString:
    """Pack ``b``-bit sample values LSB-first into one contiguous bit string."""
    if not 1 <= b <= 64:
        raise ParameterError(f"sample width b must be in [1, 64], got {b}")
    arr = np.asarray(samples)
    if arr.ndim != 1:
        arr = arr.ravel()
    if arr.size == 0:
        return BitString.zeros(0)
    if arr.dtype.kind not in "iu":
        raise ParameterError(f"samples must be integers, got dtype {arr.dtype}")
    if arr.dtype.kind == "i" and arr.min() < 0:
        raise ParameterError("samples must be non-negative")
    if b < 64 and int(arr.max()) >> b:
        raise ParameterError(f"sample value {int(arr.max())} does not fit in {b} bits")
    wide = arr.astype("<u8").view(np.uint8).reshape(-1, 8)
    if b % 8 == 0:
        return BitString._wrap(np.ascontiguousarray(wide[:, : b // 8]).ravel(), arr.size * b)
    bits = np.unpackbits(wide, axis=1, bitorder="little")[:, :b]
    return BitString._wrap(np.packbits(bits, bitorder="little"), arr.size * b)


def bits_to_samples(bits: BitString, b: int) -> np.ndarray:
    """Inverse of :func:`samples_to_bits`; trailing bits short of a sample are dropped."""
    if not 1 <= b <= 64:
        raise ParameterError(f"sample width b must be in [1, 64], got {b}")
    count = len(bits) // b
    arr = bits[: count * b].to_array().reshape(count, b)
    padded = np.zeros((count, 64), np.uint8)
    padded[:, :b] = arr
    return np.packbits(padded, axis=1, bitorder="little").view("<u8").ravel().copy()


@dataclass(frozen=True)
class ExtractionSummary:
    mode: str
    blocks_processed: int
    emitted_bits: int
    consumed_samples: int
    discarded_samples: int
    retained_samples: int
    error_bound_spent: float
    gadget_error_spent: float
    capped: bool

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.__dict__.items())


class ExtractorState:
    """Single-owner online extractor for an equal- or incremental-block plan.

    Parameters
    ----------
    plan : EqPlan or NeqPlan
    initial_seed : BitString
        Uniform seed independent of the raw data, ``plan.seed_len`` bits.
        It is never generated here.
    workers : int
        Threads used for batches of complete equal-size blocks.
    """

    def __init__(self, plan: EqPlan | NeqPlan, initial_seed: BitString, workers: int = 1):
        if not isinstance(plan, (EqPlan, NeqPlan)):
            raise ParameterError(f"unsupported plan type {type(plan).__name__}")
        if not isinstance(initial_seed, BitString):
            raise ParameterError("initial seed must be a BitString")
        if len(initial_seed) != plan.seed_len:
            raise ParameterError(
                f"initial seed has {len(initial_seed)} bits, plan needs {plan.seed_len}")
        self.plan = plan
        self.mode = plan.mode
        self.workers = max(1, int(workers))
        self.block_index = 1
        self.current_seed = initial_seed
        self.emitted_bits = 0
        self.consumed_samples = 0
        self.discarded_samples = 0
        self.capped = False
        self._buffer = BitString.zeros(0)
        self._summary: ExtractionSummary | None = None

    @property
    def blocks_processed(self) -> int:
        return self.block_index - 1

    @property
    def current_block_bits(self) -> int:
        if self.mode == "eq":
            return self.plan.block_bits
        return self.plan.b * self.plan.block_samples(self.block_index)

    @property
    def buffered_samples(self) -> int:
        return len(self._buffer) // self.plan.b

    @property
    def error_spent(self) -> float:
        if self.mode == "eq":
            return self.plan.error_after_k(self.blocks_processed)
        return float(neq_error_after_k(self.plan, self.blocks_processed))

    @property
    def finished(self) -> bool:
        return self._summary is not None

    def feed(self, samples) -> BitString:
        """Append ``b``-bit samples; return the bits of every block completed."""
        return self.feed_bits(samples_to_bits(samples, self.plan.b))

    def feed_bits(self, raw: BitString) -> BitString:
        """Like :meth:`feed` for samples already packed into a bit string."""
        if self.finished:
            raise StateError("extractor already finished")
        if len(raw) % self.plan.b:
            raise ParameterError(f"{len(raw)} bits is not a whole number of {self.plan.b}-bit samples")
        if self.capped:
            self.discarded_samples += len(raw) // self.plan.b
            return BitString.zeros(0)
        data = self._buffer + raw
        if self.mode == "eq":
            out, used = self._run_eq(data)
        else:
            out, used = self._run_neq(data)
        self.consumed_samples += used // self.plan.b
        rest = data[used:]
        if self.capped:
            self.discarded_samples += len(rest) // self.plan.b
            rest = BitString.zeros(0)
        self._buffer = rest
        self.emitted_bits += len(out)
        return out

    def _run_eq(self, data: BitString) -> tuple[BitString, int]:
        plan = self.plan
        k = min(len(data) // plan.block_bits, plan.num_blocks - self.blocks_processed)
        if k <= 0:
            return BitString.zeros(0), 0
        kernel = toeplitz_kernel(plan.gadget.toeplitz, self.current_seed)
        out = kernel.apply_blocks(data, k, self.workers)
        # Expanded output is (T_s y, s): after cutting off r = T_s y the
        # trailing d bits, i.e. the next seed, are s again.
        self.block_index += k
        if self.blocks_processed >= plan.num_blocks:
            self.capped = True
            log.warning("plan covers %d blocks; further input is discarded", plan.num_blocks)
        return out, k * plan.block_bits

    def _run_neq(self, data: BitString) -> tuple[BitString, int]:
        plan = self.plan
        pos = 0
        pieces = []
        while True:
            if self.block_index > plan.last_block:
                self.capped = True
                log.warning("block length cap %d reached; extraction stopped",
                            plan.max_block_samples)
                break
            nbits = self.current_block_bits
            if len(data) - pos < nbits:
                break
            gadget = plan.gadget(self.block_index)
            z = extract_expanded(gadget, data[pos: pos + nbits], self.current_seed)
            r_len = plan.r_len(self.block_index)
            pieces.append(z[:r_len])
            self.current_seed = z[r_len:]
            pos += nbits
            self.block_index += 1
        return BitString.concat(pieces), pos

    def finish(self) -> ExtractionSummary:
        """Close the extractor and report what happened to buffered input."""
        if self._summary is None:
            buffered = self.buffered_samples
            if self.mode == "eq":
                gadget_err = self.error_spent
                discarded, retained = self.discarded_samples + buffered, 0
            else:
                gadget_err = neq_gadget_error_after_k(self.plan, self.blocks_processed)
                discarded, retained = self.discarded_samples, buffered
            self._summary = ExtractionSummary(
                mode=self.mode,
                blocks_processed=self.blocks_processed,
                emitted_bits=self.emitted_bits,
                consumed_samples=self.consumed_samples,
                discarded_samples=discarded,
                retained_samples=retained,
                error_bound_spent=self.error_spent,
                gadget_error_spent=gadget_err,
                capped=self.capped,
            )
        return self._summary


def extract_eq_parallel(plan: EqPlan, initial_seed: BitString, raw, worker_count: int = 1) -> BitString:
    """Equal-block extraction of a complete input with blocks spread over threads.

    ``raw`` is a :class:`BitString` of packed samples or an integer sample
    array. Output is identical to feeding ``raw`` through an
    :class:`ExtractorState` and finishing it.
    """
    if not isinstance(plan, EqPlan):
        raise UnsupportedError("parallel extraction needs equal blocks with a seed-preserving gadget")
    if len(initial_seed) != plan.seed_len:
        raise ParameterError(f"initial seed has {len(initial_seed)} bits, plan needs {plan.seed_len}")
    if not isinstance(raw, BitString):
        raw = samples_to_bits(raw, plan.b)
    k = min(len(raw) // plan.block_bits, plan.num_blocks)
    kernel = toeplitz_kernel(plan.gadget.toeplitz, initial_seed)
    return kernel.apply_blocks(raw, k, worker_count)


# file formats: headerless, bits packed LSB-first

def read_bits_file(path, nbits: int | None = None, exact: bool = True) -> BitString:
    """Read a packed bit file.

    With ``exact`` the file must be exactly ``ceil(nbits / 8)`` bytes long.
    """
    path = Path(path)
    size = path.stat().st_size
    if nbits is not None and exact and size != (nbits + 7) // 8:
        raise ParameterError(f"{path} has {size} bytes, expected {(nbits + 7) // 8} for {nbits} bits")
    data = np.fromfile(path, dtype=np.uint8)
    return BitString(data, nbits if nbits is not None else 8 * size)


def count_raw_samples(path, b: int) -> int:
    return (8 * Path(path).stat().st_size) // b


def iter_raw_file(path, b: int, chunk_samples: int = 1 << 20):
    """Yield the raw file as bit strings of whole samples.

    Chunks hold a multiple of 8 samples so every chunk starts on a byte.
    """
    total = count_raw_samples(path, b)
    chunk_samples = max(8, chunk_samples - chunk_samples % 8)
    chunk_bytes = chunk_samples * b // 8
    done = 0
    with open(path, "rb") as fh:
        while done < total:
            take = min(chunk_samples, total - done)
            buf = fh.read(chunk_bytes if take == chunk_samples else (take * b + 7) // 8)
            yield BitString(buf, take * b)
            done += take


class BitFileWriter:
    """Append bit strings to a file that only appears once :meth:`commit` runs."""

    def __init__(self, path):
        self.path = Path(path)
        fd, tmp = tempfile.mkstemp(prefix=f".{self.path.name}.", dir=self.path.parent or ".")
        self._tmp = Path(tmp)
        self._fh = os.fdopen(fd, "wb")
        self._pending = BitString.zeros(0)
        self.bits_written = 0

    def write(self, bits: BitString) -> None:
        data = self._pending + bits
        whole = len(data) - len(data) % 8
        if whole:
            self._fh.write(data.data[: whole // 8].tobytes())
        self._pending = data[whole:]
        self.bits_written += len(bits)

    def commit(self) -> None:
        if len(self._pending):
            self._fh.write(self._pending.to_bytes())
        self._fh.close()
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(self._tmp, 0o666 & ~umask)
        os.replace(self._tmp, self.path)

    def abort(self) -> None:
        if not self._fh.closed:
            self._fh.close()
        self._tmp.unlink(missing_ok=True)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            self.abort()
        return False


def write_bits_file(path, bits: BitString) -> None:
    with BitFileWriter(path) as w:
        w.write(bits)
