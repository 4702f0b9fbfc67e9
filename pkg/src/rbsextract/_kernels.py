"""Compiled GF(2) inner loops.

Bit layout everywhere: bit ``k`` of a packed vector lives in word ``k >> 6``
at position ``k & 63`` (LSB first), which is the little-endian view of the
LSB-first byte packing used by :class:`rbsextract.bitcore.BitString`.
"""
import numpy as np
from numba import njit

_ONE = np.uint64(1)
_SIX_THREE = np.uint64(63)


@njit(cache=True, nogil=True)
def _parity64(x):
    x ^= x >> np.uint64(32)
    x ^= x >> np.uint64(16)
    x ^= x >> np.uint64(8)
    x ^= x >> np.uint64(4)
    x ^= x >> np.uint64(2)
    x ^= x >> np.uint64(1)
    return x & np.uint64(1)


@njit(cache=True, nogil=True)
def toeplitz_window_matvec(seed_words, x_words, n, u, out_words):
    """Row-wise AND + parity Toeplitz product.

    Row ``i`` of the matrix is the seed window starting at bit ``u-1-i``;
    it is shifted out of ``seed_words`` on the fly so no rows are stored.
    ``seed_words`` must carry at least two zero words of padding and
    ``x_words`` must be zero beyond bit ``n``. ``out_words`` must be zeroed.
    """
    n_words = (n + 63) // 64
    for i in range(u):
        start = u - 1 - i
        q = start >> 6
        r = np.uint64(start & 63)
        acc = np.uint64(0)
        if r == 0:
            for k in range(n_words):
                acc ^= seed_words[q + k] & x_words[k]
        else:
            back = np.uint64(64) - r
            for k in range(n_words):
                w = (seed_words[q + k] >> r) | (seed_words[q + k + 1] << back)
                acc ^= w & x_words[k]
        out_words[i >> 6] |= _parity64(acc) << np.uint64(i & 63)


@njit(cache=True, nogil=True)
def table_extract(data, first_block, nblocks, block_bytes, tables, u, dest, dest_bit0):
    """Batch Toeplitz product through per-byte lookup tables.

    ``tables[g, p, v]`` holds output words ``4g..4g+3`` contributed by input
    byte ``p`` taking value ``v``. Block ``first_block + t`` is read from
    ``data[(first_block + t) * block_bytes:]`` and its ``u`` output bits are
    OR-ed into ``dest`` at bit offset ``dest_bit0 + t * u``. Only words that
    receive output bits are touched, so callers may run disjoint,
    word-aligned ranges concurrently.
    """
    groups = tables.shape[0]
    out_words = (u + 63) // 64
    acc = np.zeros(groups * 4, np.uint64)
    for t in range(nblocks):
        base = (first_block + t) * block_bytes
        for g in range(groups):
            a0 = np.uint64(0)
            a1 = np.uint64(0)
            a2 = np.uint64(0)
            a3 = np.uint64(0)
            for p in range(block_bytes):
                row = tables[g, p, data[base + p]]
                a0 ^= row[0]
                a1 ^= row[1]
                a2 ^= row[2]
                a3 ^= row[3]
            acc[4 * g] = a0
            acc[4 * g + 1] = a1
            acc[4 * g + 2] = a2
            acc[4 * g + 3] = a3
        pos = dest_bit0 + t * u
        for w in range(out_words):
            nbits = u - 64 * w
            if nbits > 64:
                nbits = 64
            word = acc[w]
            bit = pos + 64 * w
            q = bit >> 6
            r = bit & 63
            dest[q] |= word << np.uint64(r)
            if r != 0 and r + nbits > 64:
                dest[q + 1] |= word >> np.uint64(64 - r)


@njit(cache=True, nogil=True)
def seed_columns(s, n, u, cols):
    """Columns of the ``u x n`` Toeplitz matrix of integer seed ``s`` as ``u``-bit ints."""
    for j in range(n):
        c = 0
        for i in range(u):
            c |= ((s >> (j + u - 1 - i)) & 1) << i
        cols[j] = c


@njit(cache=True, nogil=True)
def hash_table(cols, n, table):
    """``table[y]`` = product of the matrix with every ``n``-bit input ``y``."""
    table[0] = 0
    for k in range(n):
        lo = 1 << k
        for y in range(lo):
            table[lo + y] = table[y] ^ cols[k]


@njit(cache=True, nogil=True)
def blockwise_tvd(atoms, weights, block_bits, blocks, d):
    """Exact distance from uniform of ``(T_s y_1, ..., T_s y_k, s)``.

    ``atoms``/``weights`` list the support of a source on ``blocks *
    block_bits`` bits; every block is hashed with the same uniform seed.
    """
    u = d - block_bits + 1
    ncell = 1 << (u * blocks)
    target = 1.0 / ncell
    mask = (1 << block_bits) - 1
    cols = np.zeros(block_bits, np.int64)
    table = np.zeros(1 << block_bits, np.int64)
    hist = np.zeros(ncell)
    total = 0.0
    for s in range(1 << d):
        seed_columns(s, block_bits, u, cols)
        hash_table(cols, block_bits, table)
        hist[:] = 0.0
        for a in range(atoms.size):
            y = atoms[a]
            z = 0
            for t in range(blocks):
                z |= table[(y >> (t * block_bits)) & mask] << (t * u)
            hist[z] += weights[a]
        acc = 0.0
        for c in range(ncell):
            acc += abs(hist[c] - target)
        total += 0.5 * acc
    return total / (1 << d)
