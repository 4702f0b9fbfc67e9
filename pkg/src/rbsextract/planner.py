"""Parameter planning and error budgets for both block-wise extractors.

Equal blocks: ``n = ceil(4/(delta b) * log2(N/eps))`` samples per block and a
single ``d_{bn}``-bit seed. Incremental blocks: ``n_l = n1 + (l-1)*Delta``
samples in block ``l`` and a ``d_{b n1}``-bit seed; the error after ``k``
blocks is the geometric partial sum of ``2^(-delta b n_l / 4)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

from .errors import DegeneratePlanError, DivergentPlanError, InfeasiblePlanError, ParameterError
from .gadget import GadgetParams, as_rate, make_gadget_params, seed_length

__all__ = [
    "BlockShape",
    "EqPlan",
    "NeqPlan",
    "block_shape",
    "plan_eq",
    "plan_neq",
    "neq_error_after_k",
    "neq_gadget_error_after_k",
    "parse_plan",
    "DEFAULT_MAX_BLOCK_SAMPLES",
]

DEFAULT_MAX_BLOCK_SAMPLES = 1 << 20
# working precision (bits) for the incremental-block error series
SERIES_PREC = 256


def _positive_int(name: str, value) -> int:
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ParameterError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class BlockShape:
    """Bit budget of one block: input, seed in, emitted output, seed out."""

    samples: int
    input_bits: int
    seed_bits: int
    out_bits: int
    next_seed_bits: int


def block_shape(b: int, delta, samples: int, next_samples: int) -> BlockShape:
    """Shape of a block of ``samples`` followed by one of ``next_samples``.

    The expanded gadget output (``m`` bits) is cut into ``m - d_next``
    emitted bits and a ``d_next``-bit seed for the following block.
    """
    g = make_gadget_params(b * samples, delta)
    d_next = seed_length(b * next_samples, g.delta)
    return BlockShape(samples, g.n_bits, g.d, g.m - d_next, d_next)


@dataclass(frozen=True)
class EqPlan:
    b: int
    N: int
    delta: Fraction
    eps: float
    eps_s: float
    n: int
    block_bits: int
    gadget: GadgetParams
    r_per_block: int
    num_blocks: int
    total_output_bits: int
    total_error_bound: float

    mode = "eq"

    @property
    def seed_len(self) -> int:
        return self.gadget.d

    def error_after_k(self, k: int) -> float:
        """Error bound after ``k`` blocks: ``k * eps_gadget + 2 eps_s``."""
        return k * self.gadget.eps + 2 * self.eps_s

    def to_text(self) -> str:
        lines = [
            "mode=eq",
            f"b={self.b}",
            f"N={self.N}",
            f"delta={self.delta}",
            f"eps={self.eps!r}",
            f"eps_s={self.eps_s!r}",
            f"n={self.n}",
            f"block_bits={self.block_bits}",
            f"d={self.gadget.d}",
            f"m={self.gadget.m}",
            f"r_per_block={self.r_per_block}",
            f"num_blocks={self.num_blocks}",
            f"total_output_bits={self.total_output_bits}",
            f"gadget_eps_log2={float(self.gadget.eps_log2):.6f}",
            f"total_error_bound={self.total_error_bound!r}",
        ]
        return "\n".join(lines) + "\n"


def plan_eq(b: int, N: int, delta, eps: float, eps_s: float = 0.0) -> EqPlan:
    """Plan the equal-block extractor for ``N`` samples of ``b`` bits.

    ``n`` starts at ``ceil(4/(delta b) log2(N/eps))`` and is bumped until the
    rounded-seed gadget error summed over all blocks is at most ``eps``.
    The trailing ``N mod n`` samples are not extracted.
    """
    b = _positive_int("b", b)
    N = _positive_int("N", N)
    rate = as_rate(delta)
    eps = float(eps)
    eps_s = float(eps_s)
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")
    if not eps_s >= 0:
        raise ParameterError(f"eps_s must be non-negative, got {eps_s}")
    log_ratio = Fraction(math.log2(N)) - Fraction(math.log2(eps))
    n = math.ceil(4 * log_ratio / (rate * b))
    if N < n:
        raise InfeasiblePlanError(f"N={N} samples is shorter than one block of n={n}")
    gadget = make_gadget_params(b * n, rate)
    if gadget.eps >= 1:
        raise DegeneratePlanError(
            f"gadget error {gadget.eps:.3g} >= 1 at {b * n} bits per block")
    while (N // n) * gadget.eps > eps:
        n += 1
        if N < n:
            raise InfeasiblePlanError(
                f"no block length n <= N={N} keeps the total error below {eps}")
        gadget = make_gadget_params(b * n, rate)
    num_blocks = N // n
    r = gadget.m - gadget.d
    return EqPlan(
        b=b, N=N, delta=rate, eps=eps, eps_s=eps_s, n=n, block_bits=b * n,
        gadget=gadget, r_per_block=r, num_blocks=num_blocks,
        total_output_bits=num_blocks * r,
        total_error_bound=num_blocks * gadget.eps + 2 * eps_s,
    )


@dataclass(frozen=True)
class NeqPlan:
    b: int
    delta: Fraction
    eps_s: float
    n1: int
    Delta: int
    error_bound: mpmath.mpf
    max_block_samples: int = DEFAULT_MAX_BLOCK_SAMPLES

    mode = "neq"

    def block_samples(self, ell: int) -> int:
        return self.n1 + (ell - 1) * self.Delta

    def gadget(self, ell: int) -> GadgetParams:
        return make_gadget_params(self.b * self.block_samples(ell), self.delta)

    def seed_len_for(self, ell: int) -> int:
        """Seed bits consumed by block ``ell``."""
        return seed_length(self.b * self.block_samples(ell), self.delta)

    @property
    def seed_len(self) -> int:
        return self.seed_len_for(1)

    def r_len(self, ell: int) -> int:
        """Bits emitted by block ``ell``: ``m_{b n_l} - d_{b n_{l+1}}``."""
        return self.shape(ell).out_bits

    def shape(self, ell: int) -> BlockShape:
        if ell < 1:
            raise ParameterError("block index starts at 1")
        return block_shape(self.b, self.delta, self.block_samples(ell), self.block_samples(ell + 1))

    @property
    def last_block(self) -> int:
        """Index of the last block that fits under ``max_block_samples``."""
        return (self.max_block_samples - self.n1) // self.Delta + 1

    def to_text(self, shapes: int = 5) -> str:
        lines = [
            "mode=neq",
            f"b={self.b}",
            f"delta={self.delta}",
            f"n1={self.n1}",
            f"Delta={self.Delta}",
            f"eps_s={self.eps_s!r}",
            f"max_block_samples={self.max_block_samples}",
            f"seed_len={self.seed_len}",
            f"error_bound={mpmath.nstr(self.error_bound, 17)}",
        ]
        for ell in range(1, shapes + 1):
            s = self.shape(ell)
            lines.append(
                f"block.{ell}=samples:{s.samples},input_bits:{s.input_bits},"
                f"seed_bits:{s.seed_bits},out_bits:{s.out_bits}")
        return "\n".join(lines) + "\n"


def _min_r_len(b: int, rate: Fraction, n1: int, Delta: int, last: int) -> tuple[int, int]:
    """Smallest emitted length over all blocks up to ``last`` and where it occurs.

    ``r(l+P) = r(l) + delta b Delta P / 2`` with ``P`` the denominator of
    ``(1 + delta/2) b Delta``, so one period decides the minimum. When
    ``delta b Delta >= 2`` consecutive differences are already ``>= 0``.
    """
    c = 1 + rate / 2
    span = last
    if rate * b * Delta >= 2:
        span = 1
    else:
        span = min(last, (c * b * Delta).denominator)
    ells = np.arange(1, span + 1, dtype=object)
    bits = b * (n1 + (ells - 1) * Delta)

    def d(nbits):
        # ceil(c * nbits) - 1 with integer arithmetic
        return -((-c.numerator * nbits) // c.denominator) - 1

    r = 2 * d(bits) - bits + 1 - d(bits + b * Delta)
    i = int(np.argmin(r))
    return int(r[i]), i + 1


def plan_neq(b: int, delta, n1: int, Delta: int, eps_s: float = 0.0,
             max_block_samples: int = DEFAULT_MAX_BLOCK_SAMPLES) -> NeqPlan:
    """Plan the incremental-block extractor.

    Raises :class:`DivergentPlanError` for ``Delta <= 0`` and
    :class:`InfeasiblePlanError` when some block would emit no bits.
    """
    b = _positive_int("b", b)
    rate = as_rate(delta)
    if isinstance(Delta, bool) or int(Delta) != Delta:
        raise ParameterError(f"Delta must be an integer, got {Delta!r}")
    if Delta <= 0:
        raise DivergentPlanError(f"Delta={Delta}: the error series only converges for Delta > 0")
    Delta = int(Delta)
    n1 = _positive_int("n1", n1)
    max_block_samples = _positive_int("max_block_samples", max_block_samples)
    if n1 > max_block_samples:
        raise ParameterError(f"n1={n1} exceeds max_block_samples={max_block_samples}")
    eps_s = float(eps_s)
    if not eps_s >= 0:
        raise ParameterError(f"eps_s must be non-negative, got {eps_s}")
    last = (max_block_samples - n1) // Delta + 1
    r_min, where = _min_r_len(b, rate, n1, Delta, last)
    if r_min < 1:
        raise InfeasiblePlanError(
            f"block {where} would emit {r_min} bits; increase n1 (need m - d_next >= 1)")
    with mpmath.workprec(SERIES_PREC):
        first, ratio = _series_terms(rate, b, n1, Delta)
        bound = first / (1 - ratio) + 2 * mpmath.mpf(eps_s)
    return NeqPlan(b=b, delta=rate, eps_s=eps_s, n1=n1, Delta=Delta,
                   error_bound=bound, max_block_samples=max_block_samples)


def _series_terms(rate: Fraction, b: int, n1: int, Delta: int):
    q = mpmath.mpf(rate.numerator) / rate.denominator
    return mpmath.power(2, -q * b * n1 / 4), mpmath.power(2, -q * b * Delta / 4)


def neq_error_after_k(plan: NeqPlan, k: int) -> mpmath.mpf:
    """``sum_{l=1..k} 2^(-delta b n_l / 4) + 2 eps_s`` at 256-bit precision."""
    if int(k) != k or k < 0:
        raise ParameterError(f"k must be a non-negative integer, got {k!r}")
    with mpmath.workprec(SERIES_PREC):
        first, ratio = _series_terms(plan.delta, plan.b, plan.n1, plan.Delta)
        partial = first * (1 - mpmath.power(ratio, int(k))) / (1 - ratio)
        return partial + 2 * mpmath.mpf(plan.eps_s)


def neq_gadget_error_after_k(plan: NeqPlan, k: int) -> float:
    """Sum of the rounded-seed gadget errors of the first ``k`` blocks (+ 2 eps_s).

    Each term is at most ``sqrt(2)`` times the corresponding term of
    :func:`neq_error_after_k`.
    """
    return math.fsum(plan.gadget(ell).eps for ell in range(1, int(k) + 1)) + 2 * plan.eps_s


def _parse_kv(text: str) -> dict[str, str]:
    out = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParameterError(f"malformed plan line: {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_plan(text: str) -> EqPlan | NeqPlan:
    """Rebuild a plan from :meth:`to_text` output and check derived fields."""
    kv = _parse_kv(text)
    mode = kv.get("mode")
    try:
        if mode == "eq":
            plan = plan_eq(int(kv["b"]), int(kv["N"]), kv["delta"], float(kv["eps"]),
                           float(kv.get("eps_s", 0.0)))
            checks = {"n": plan.n, "block_bits": plan.block_bits, "d": plan.gadget.d,
                      "m": plan.gadget.m, "r_per_block": plan.r_per_block,
                      "num_blocks": plan.num_blocks,
                      "total_output_bits": plan.total_output_bits}
        elif mode == "neq":
            plan = plan_neq(int(kv["b"]), kv["delta"], int(kv["n1"]), int(kv["Delta"]),
                            float(kv.get("eps_s", 0.0)),
                            int(kv.get("max_block_samples", DEFAULT_MAX_BLOCK_SAMPLES)))
            checks = {"seed_len": plan.seed_len}
        else:
            raise ParameterError(f"plan mode must be eq or neq, got {mode!r}")
    except KeyError as exc:
        raise ParameterError(f"plan is missing key {exc.args[0]!r}") from None
    for key, expected in checks.items():
        if key in kv and int(kv[key]) != expected:
            raise ParameterError(f"plan field {key}={kv[key]} disagrees with recomputed {expected}")
    return plan
