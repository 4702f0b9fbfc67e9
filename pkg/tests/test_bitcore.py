from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rbsextract.bitcore import (BitString, ToeplitzKernel, ToeplitzSpec, _split_ranges,
                                toeplitz_matvec, toeplitz_matvec_packed)
from rbsextract.errors import ParameterError
from rbsextract.verify import dense_toeplitz


def dense_product(spec, seed, x):
    mat = dense_toeplitz(spec, seed).astype(np.int64)
    return BitString.from_bits((mat @ x.to_array()) & 1)


@st.composite
def shapes_and_vectors(draw, max_n=300, max_u=300):
    n = draw(st.integers(1, max_n))
    u = draw(st.integers(1, max_u))
    seed = draw(st.binary(min_size=(n + u + 6) // 8, max_size=(n + u + 6) // 8))
    x = draw(st.binary(min_size=(n + 7) // 8, max_size=(n + 7) // 8))
    return ToeplitzSpec(n=n, u=u), BitString(seed, n + u - 1), BitString(x, n)


class TestBitString:
    def test_lsb_first_packing(self):
        b = BitString.from_str("1011 0000 1")
        assert b.to_bytes() == bytes([0b00001101, 0b1])
        assert len(b) == 9 and b.count() == 4

    def test_constructor_clears_padding(self):
        assert BitString(b"\xff", 3).to_bytes() == b"\x07"
        assert BitString(b"\xff", 3) == BitString.from_str("111")

    def test_too_short_buffer(self):
        with pytest.raises(ParameterError):
            BitString(b"\x00", 9)

    def test_indexing(self):
        b = BitString.from_str("0100")
        assert b[1] == 1 and b[-3] == 1 and b[0] == 0
        with pytest.raises(IndexError):
            b[4]

    def test_xor_length_mismatch(self):
        with pytest.raises(ParameterError):
            BitString.zeros(3) ^ BitString.zeros(4)

    @given(st.lists(st.integers(0, 1), max_size=200), st.integers(0, 210), st.integers(0, 210))
    def test_slice_matches_list(self, bits, a, b):
        s = BitString.from_bits(bits)
        assert s[a:b].to_array().tolist() == bits[a:b]

    @given(st.lists(st.lists(st.integers(0, 1), max_size=40), max_size=6))
    def test_concat_matches_list(self, parts):
        joined = BitString.concat(BitString.from_bits(p) for p in parts)
        assert joined.to_array().tolist() == [bit for p in parts for bit in p]

    @given(st.binary(max_size=40))
    def test_words_little_endian(self, raw):
        b = BitString(raw)
        w = b.words(1)
        assert w.dtype == np.dtype("<u8") and w[-1] == 0
        ints = int.from_bytes(raw, "little")
        assert sum(int(v) << (64 * i) for i, v in enumerate(w)) == ints


class TestToeplitzProducts:
    def test_matrix_structure(self):
        # constant diagonals: T[i][j] = seed[j - i + u - 1]
        spec = ToeplitzSpec(n=3, u=2)
        seed = BitString.from_str("1100")
        assert dense_toeplitz(spec, seed).tolist() == [[1, 0, 0], [1, 1, 0]]

    def test_rejects_bad_lengths(self):
        spec = ToeplitzSpec(n=4, u=3)
        with pytest.raises(ParameterError):
            toeplitz_matvec(spec, BitString.zeros(5), BitString.zeros(4))
        with pytest.raises(ParameterError):
            toeplitz_matvec_packed(spec, BitString.zeros(6), BitString.zeros(5))
        with pytest.raises(ParameterError):
            ToeplitzSpec(n=0, u=1)

    @given(shapes_and_vectors())
    def test_packed_and_unpacked_match_dense(self, case):
        spec, seed, x = case
        want = dense_product(spec, seed, x)
        assert toeplitz_matvec(spec, seed, x) == want
        assert toeplitz_matvec_packed(spec, seed, x) == want
        assert ToeplitzKernel(spec, seed).matvec(x) == want

    @given(shapes_and_vectors(max_n=150, max_u=150), st.data())
    def test_linear_in_input(self, case, data):
        spec, seed, x = case
        raw = data.draw(st.binary(min_size=(spec.n + 7) // 8, max_size=(spec.n + 7) // 8))
        y = BitString(raw, spec.n)
        lhs = toeplitz_matvec_packed(spec, seed, x ^ y)
        assert lhs == toeplitz_matvec_packed(spec, seed, x) ^ toeplitz_matvec_packed(spec, seed, y)

    @given(shapes_and_vectors(max_n=150, max_u=150))
    def test_diagonals_constant(self, case):
        spec, seed, _ = case
        mat = dense_toeplitz(spec, seed)
        assert np.array_equal(mat[1:, 1:], mat[:-1, :-1])

    def test_shift_of_seed_slides_rows(self, rng):
        spec = ToeplitzSpec(n=40, u=30)
        seed = BitString.random(spec.seed_len, rng)
        x = BitString.random(spec.n, rng)
        out = toeplitz_matvec_packed(spec, seed, x)
        shorter = ToeplitzSpec(n=40, u=29)
        # rows 1.. of the u=30 matrix use seed bits 0 .. seed_len-2
        assert toeplitz_matvec_packed(shorter, seed[: shorter.seed_len], x) == out[1:]


class TestBulkKernel:
    @pytest.mark.parametrize("n,u", [(496, 167), (64, 1), (7, 300), (129, 257), (24, 70)])
    @pytest.mark.parametrize("workers", [1, 3, 8])
    def test_blocks_match_reference(self, rng, n, u, workers):
        spec = ToeplitzSpec(n=n, u=u)
        seed = BitString.random(spec.seed_len, rng)
        nblocks = 300
        raw = BitString.random(n * nblocks + 5, rng)
        got = ToeplitzKernel(spec, seed).apply_blocks(raw, nblocks, workers)
        want = BitString.concat(toeplitz_matvec(spec, seed, raw[t * n:(t + 1) * n])
                                for t in range(nblocks))
        assert got == want

    def test_zero_blocks(self, rng):
        spec = ToeplitzSpec(n=16, u=5)
        k = ToeplitzKernel(spec, BitString.random(spec.seed_len, rng))
        assert len(k.apply_blocks(BitString.zeros(10), 0)) == 0
        with pytest.raises(ParameterError):
            k.apply_blocks(BitString.zeros(10), 1)

    @given(st.integers(1, 5000), st.integers(1, 16))
    def test_ranges_cover_and_align(self, nblocks, workers):
        ranges = _split_ranges(nblocks, workers)
        assert ranges[0][0] == 0 and ranges[-1][1] == nblocks
        assert all(a[1] == b[0] for a, b in zip(ranges, ranges[1:]))
        assert all(a % 64 == 0 for a, _ in ranges)
        assert len(ranges) <= workers
