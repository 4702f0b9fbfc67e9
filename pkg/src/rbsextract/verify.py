"""Exhaustive security oracles and advisory statistical tests.

The oracles enumerate every seed and every source atom, so they are capped
at 12 input bits and 16 seed bits. The statistical tests only flag gross
failures; they cannot certify entropy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc
from scipy.stats import chi2

from . import _kernels
from .bitcore import BitString, ToeplitzSpec
from .errors import ParameterError, RefusalError
from .gadget import extract, make_gadget_params

__all__ = [
    "MAX_ORACLE_INPUT_BITS",
    "MAX_ORACLE_SEED_BITS",
    "SmallSource",
    "random_small_source",
    "dense_toeplitz",
    "gf2_rank",
    "leftover_hash_bound",
    "tvd_strong_extractor",
    "tvd_blockwise_same_seed",
    "uniform_source_tvd",
    "CounterexampleReport",
    "counterexample_demo",
    "max_conditional_bit_prob",
    "is_reverse_block_source",
    "TestResult",
    "monobit_test",
    "block_chi2_test",
    "SelfTestRow",
    "run_selftest",
]

MAX_ORACLE_INPUT_BITS = 12
MAX_ORACLE_SEED_BITS = 16


@dataclass(frozen=True)
class SmallSource:
    """Explicit distribution over ``{0,1}^n``; atom ``y`` has bit ``k`` equal to input bit ``k``."""

    n: int
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if not 1 <= self.n <= 16:
            raise ParameterError(f"small sources have 1..16 bits, got {self.n}")
        if p.shape != (1 << self.n,):
            raise ParameterError(f"need {1 << self.n} probabilities, got shape {p.shape}")
        if (p < 0).any() or abs(p.sum() - 1) > 1e-12:
            raise ParameterError("probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def min_entropy(self) -> float:
        return -math.log2(self.probs.max())

    def xor_relabel(self, mask: int) -> "SmallSource":
        """The source of ``Y xor mask``."""
        return SmallSource(self.n, self.probs[np.arange(1 << self.n) ^ mask])


def random_small_source(n: int, min_entropy: float, rng: np.random.Generator,
                        kind: str = "capped") -> SmallSource:
    """Random source on ``n`` bits with exact min-entropy at least ``min_entropy``.

    ``kind="flat"`` is uniform on a random set of ``ceil(2^h)`` atoms, the
    extreme case for hashing. ``kind="capped"`` draws random weights on a
    random support and water-fills them under the cap ``2^-h``.
    """
    if not 0 <= min_entropy <= n:
        raise ParameterError("min-entropy must lie in [0, n]")
    size = 1 << n
    k_min = math.ceil(2.0 ** min_entropy - 1e-9)
    cap = 2.0 ** -min_entropy
    if kind == "flat":
        support = rng.choice(size, k_min, replace=False)
        p = np.zeros(size)
        p[support] = 1.0 / k_min
        return SmallSource(n, p)
    if kind != "capped":
        raise ParameterError(f"unknown source kind {kind!r}")
    k = int(rng.integers(k_min, size + 1))
    support = rng.choice(size, k, replace=False)
    w = rng.exponential(size=k) ** float(rng.uniform(0.5, 3.0))
    w /= w.sum()
    for _ in range(64):
        over = w > cap
        if not over.any():
            break
        excess = (w[over] - cap).sum()
        w[over] = cap
        free = ~over & (w < cap)
        w[free] += excess * w[free] / w[free].sum()
    w = np.minimum(w, cap)
    # put simple rounding leftovers on atoms that still have room
    short, room = 1.0 - w.sum(), cap - w
    if short > 0 and room.sum() > 0:
        w += short * room / room.sum()
    p = np.zeros(size)
    p[support] = w
    p /= p.sum()
    return SmallSource(n, p)


def dense_toeplitz(spec: ToeplitzSpec, seed: BitString) -> np.ndarray:
    """The ``u x n`` matrix with entry ``(i, j)`` equal to seed bit ``j - i + u - 1``."""
    if len(seed) != spec.seed_len:
        raise ParameterError(f"seed has {len(seed)} bits, expected {spec.seed_len}")
    s = seed.to_array()
    mat = np.zeros((spec.u, spec.n), np.uint8)
    for i in range(spec.u):
        for j in range(spec.n):
            mat[i, j] = s[j - i + spec.u - 1]
    return mat


def gf2_rank(mat: np.ndarray) -> int:
    m = np.array(mat, dtype=np.uint8) & 1
    rank = 0
    rows, cols = m.shape
    for c in range(cols):
        pivot = np.flatnonzero(m[rank:, c])
        if pivot.size == 0:
            continue
        p = rank + pivot[0]
        m[[rank, p]] = m[[p, rank]]
        hit = np.flatnonzero(m[:, c])
        hit = hit[hit != rank]
        m[hit] ^= m[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def leftover_hash_bound(min_entropy: float, n: int, d: int) -> float:
    """Leftover-hash bound ``2^-((h + n - d - 1)/2)`` for the expanded Toeplitz hash."""
    return 2.0 ** (-(min_entropy + n - d - 1) / 2)


def _check_sizes(n: int, d: int) -> None:
    if n > MAX_ORACLE_INPUT_BITS or d > MAX_ORACLE_SEED_BITS:
        raise RefusalError(
            f"exhaustive oracle limited to n <= {MAX_ORACLE_INPUT_BITS}, d <= {MAX_ORACLE_SEED_BITS}"
            f" (got n={n}, d={d})")
    if d < n:
        raise ParameterError(f"seed length {d} must be at least the input length {n}")


def tvd_strong_extractor(source: SmallSource, n: int, d: int) -> float:
    """Exact distance of ``(T_s y, s)`` from uniform, over all ``2^d`` seeds."""
    if source.n != n:
        raise ParameterError(f"source has {source.n} bits, extractor expects {n}")
    _check_sizes(n, d)
    atoms = np.flatnonzero(source.probs).astype(np.int64)
    return float(_kernels.blockwise_tvd(atoms, source.probs[atoms], n, 1, d))


def tvd_blockwise_same_seed(atoms, weights, block_bits: int, blocks: int, d: int) -> float:
    """Exact distance from uniform when every block reuses one seed.

    ``atoms`` are integers over ``blocks * block_bits`` bits with block ``t``
    in bits ``t*block_bits ..``; ``weights`` are their probabilities.
    """
    _check_sizes(block_bits, d)
    out_bits = blocks * (d - block_bits + 1)
    if out_bits > 20:
        raise RefusalError(f"joint output of {out_bits} bits is too large to tabulate")
    atoms = np.asarray(atoms, dtype=np.int64)
    weights = np.asarray(weights, dtype=float)
    return float(_kernels.blockwise_tvd(atoms, weights, block_bits, blocks, d))


def uniform_source_tvd(n: int, d: int) -> float:
    """Exact distance for a uniform input, from the rank of every seed's matrix.

    A uniform input maps to a uniform vector on the matrix image, so a seed
    whose matrix has rank ``k`` contributes ``1 - 2^(k-u)``.
    """
    _check_sizes(n, d)
    spec = ToeplitzSpec(n=n, u=d - n + 1)
    total = 0.0
    for s in range(1 << d):
        bits = BitString.from_bits((s >> k) & 1 for k in range(d))
        total += 1 - 2.0 ** (gf2_rank(dense_toeplitz(spec, bits)) - spec.u)
    return total / (1 << d)


@dataclass(frozen=True)
class CounterexampleReport:
    half_len_bits: int
    seed_bits: int
    out_bits_per_block: int
    trials: int
    identical_trials: int
    exact_tvd: float | None
    per_block_bound: float

    @property
    def all_identical(self) -> bool:
        return self.identical_trials == self.trials

    @property
    def exceeds_bound(self) -> bool | None:
        return None if self.exact_tvd is None else self.exact_tvd > self.per_block_bound

    def to_text(self) -> str:
        return "".join(f"{k}={getattr(self, k)}\n" for k in (
            "half_len_bits", "seed_bits", "out_bits_per_block", "trials", "identical_trials",
            "exact_tvd", "per_block_bound", "exceeds_bound"))


def counterexample_demo(half_len_bits: int, trials: int = 100, prng_seed: int = 0,
                        delta=1) -> CounterexampleReport:
    """Same-seed block-wise hashing of a source whose second half copies its first.

    Each half is a uniform block on its own, so the gadget for rate
    ``delta`` (default 1) is used on both halves with one seed. The per-block
    bound is what would hold for independent halves.
    """
    from .sources import duplicate_halves_source

    gadget = make_gadget_params(half_len_bits, delta)
    rng = np.random.default_rng(prng_seed)
    same = 0
    for t in range(trials):
        x = duplicate_halves_source(half_len_bits, int(rng.integers(2 ** 63)))
        seed = BitString.random(gadget.d, rng)
        first = extract(gadget, x[:half_len_bits], seed)
        second = extract(gadget, x[half_len_bits:], seed)
        same += first == second
    exact = None
    out_bits = 2 * gadget.out_len
    if (half_len_bits <= MAX_ORACLE_INPUT_BITS and gadget.d <= MAX_ORACLE_SEED_BITS
            and out_bits <= 20):
        half = np.arange(1 << half_len_bits, dtype=np.int64)
        atoms = half | (half << half_len_bits)
        weights = np.full(atoms.size, 2.0 ** -half_len_bits)
        exact = tvd_blockwise_same_seed(atoms, weights, half_len_bits, 2, gadget.d)
    return CounterexampleReport(
        half_len_bits=half_len_bits, seed_bits=gadget.d, out_bits_per_block=gadget.out_len,
        trials=trials, identical_trials=int(same), exact_tvd=exact,
        per_block_bound=leftover_hash_bound(float(gadget.delta) * half_len_bits, half_len_bits, gadget.d))


def max_conditional_bit_prob(probs, total_bits: int) -> float:
    """Largest ``Pr[X_i = x_i | X_j = x_j for all j > i]`` over all bits and values."""
    p = np.asarray(probs, dtype=float)
    worst = 0.0
    for i in range(total_bits):
        q = p.reshape(1 << (total_bits - i - 1), 2, 1 << i).sum(axis=2)
        tot = q.sum(axis=1)
        ok = tot > 0
        if ok.any():
            worst = max(worst, float((q[ok].max(axis=1) / tot[ok]).max()))
    return worst


def is_reverse_block_source(probs, b: int, N: int, delta: float, slack: float = 1e-12) -> bool:
    """Exhaustive check of the reverse-block condition.

    Every contiguous run of samples ``k..i`` must keep min-entropy at least
    ``(i-k+1) * delta * b`` conditioned on any value of the later samples.
    """
    total = b * N
    if total > 16:
        raise RefusalError("exhaustive reverse-block check limited to 16 bits")
    p = np.asarray(probs, dtype=float)
    if p.shape != (1 << total,):
        raise ParameterError("probability vector has the wrong size")
    for i in range(1, N + 1):
        later = 1 << (b * (N - i))
        for k in range(1, i + 1):
            before = 1 << (b * (k - 1))
            run = 1 << (b * (i - k + 1))
            q = p.reshape(later, run, before).sum(axis=2)
            tot = q.sum(axis=1)
            ok = tot > 0
            guess = (q[ok].max(axis=1) / tot[ok]).max()
            if guess > 2.0 ** (-(i - k + 1) * delta * b) * (1 + slack):
                return False
    return True


@dataclass(frozen=True)
class TestResult:
    """Outcome of one advisory statistical test."""

    __test__ = False

    name: str
    n_bits: int
    statistic: float
    p_value: float
    alpha: float

    @property
    def passed(self) -> bool:
        return self.p_value >= self.alpha

    def to_text(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return (f"{self.name}: {verdict} (advisory) p={self.p_value:.6g} "
                f"stat={self.statistic:.6g} bits={self.n_bits}")


def monobit_test(bits: BitString, alpha: float = 0.01) -> TestResult:
    """Frequency test: is the fraction of ones consistent with 1/2?"""
    n = len(bits)
    if n < 100:
        raise RefusalError(f"monobit test needs at least 100 bits, got {n}")
    s = abs(2 * bits.count() - n) / math.sqrt(n)
    return TestResult("monobit", n, s, float(erfc(s / math.sqrt(2))), alpha)


def block_chi2_test(bits: BitString, block_len: int = 8, alpha: float = 0.01) -> TestResult:
    """Chi-square goodness of fit of non-overlapping ``block_len``-bit patterns."""
    if not 1 <= block_len <= 16:
        raise ParameterError("block_len must be in [1, 16]")
    cells = 1 << block_len
    nblocks = len(bits) // block_len
    if nblocks < 5 * cells:
        raise RefusalError(
            f"need {5 * cells} blocks of {block_len} bits for 5 expected per cell, got {nblocks}")
    if block_len == 8:
        counts = np.bincount(bits.data[:nblocks], minlength=cells)
    else:
        arr = bits[: nblocks * block_len].to_array().reshape(nblocks, block_len)
        values = arr.astype(np.int64) @ (1 << np.arange(block_len, dtype=np.int64))
        counts = np.bincount(values, minlength=cells)
    expected = nblocks / cells
    stat = float(((counts - expected) ** 2).sum() / expected)
    return TestResult(f"block_chi2[{block_len}]", nblocks * block_len, stat,
                      float(chi2.sf(stat, cells - 1)), alpha)


@dataclass(frozen=True)
class SelfTestRow:
    name: str
    passed: bool
    detail: str


def run_selftest(prng_seed: int = 2024, sources: int = 20) -> list[SelfTestRow]:
    """Small, fast version of the oracle suite."""
    from .bitcore import toeplitz_matvec, toeplitz_matvec_packed
    from .planner import plan_eq

    rng = np.random.default_rng(prng_seed)
    rows = []

    bad = 0
    for _ in range(50):
        n, u = int(rng.integers(1, 200)), int(rng.integers(1, 200))
        spec = ToeplitzSpec(n=n, u=u)
        seed, x = BitString.random(spec.seed_len, rng), BitString.random(n, rng)
        want = BitString.from_bits((dense_toeplitz(spec, seed).astype(int) @ x.to_array()) & 1)
        bad += not (toeplitz_matvec(spec, seed, x) == want == toeplitz_matvec_packed(spec, seed, x))
    rows.append(SelfTestRow("toeplitz_dense_oracle", bad == 0, f"mismatches={bad}/50"))

    worst = 0.0
    for _ in range(sources):
        n = int(rng.integers(4, 9))
        d = int(rng.integers(n, min(n + 6, MAX_ORACLE_SEED_BITS) + 1))
        rate = float(rng.choice([0.25, 0.5, 0.75, 1.0]))
        src = random_small_source(n, rate * n, rng, kind=str(rng.choice(["flat", "capped"])))
        worst = max(worst, tvd_strong_extractor(src, n, d) / leftover_hash_bound(src.min_entropy, n, d))
    rows.append(SelfTestRow("leftover_hash_bound", worst <= 1 + 1e-12,
                            f"max tvd/bound={worst:.4f} over {sources} sources"))

    n, d = 5, 8
    got = tvd_strong_extractor(SmallSource(n, np.full(1 << n, 2.0 ** -n)), n, d)
    want = uniform_source_tvd(n, d)
    rows.append(SelfTestRow("uniform_rank_oracle", abs(got - want) < 1e-12,
                            f"enumerated={got:.12f} rank={want:.12f}"))

    src = random_small_source(6, 3.0, rng)
    a = tvd_strong_extractor(src, 6, 9)
    b = tvd_strong_extractor(src.xor_relabel(int(rng.integers(64))), 6, 9)
    rows.append(SelfTestRow("xor_relabel_symmetry", abs(a - b) < 1e-12, f"{a:.12f} vs {b:.12f}"))

    rep = counterexample_demo(4, trials=20, prng_seed=prng_seed)
    rows.append(SelfTestRow("duplicate_halves", rep.all_identical and rep.exact_tvd > 0.1,
                            f"identical={rep.identical_trials}/{rep.trials} tvd={rep.exact_tvd:.6f}"))

    plan = plan_eq(16, 2 ** 51, "537/800", 2.0 ** -30)
    ok = (plan.n, plan.block_bits, plan.gadget.d, plan.r_per_block) == (31, 496, 662, 167)
    rows.append(SelfTestRow("reference_plan", ok,
                            f"n={plan.n} block_bits={plan.block_bits} d={plan.gadget.d} r={plan.r_per_block}"))

    stream = BitString.random(100_000, rng)
    m, c = monobit_test(stream), block_chi2_test(stream)
    rows.append(SelfTestRow("prng_calibration", m.passed and c.passed,
                            f"monobit p={m.p_value:.4f} chi2 p={c.p_value:.4f} (advisory)"))
    return rows
