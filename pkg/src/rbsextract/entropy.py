"""Certified min-entropy per sample for homodyne-detection raw data.

The bound depends on the measured variances through a single noise
parameter and on the ADC through the root ``g*`` of a transcendental
equation. Entropy is in bits throughout.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import erf, erfc

from .errors import CertifiedEntropyWarning, ModelError, NoSolutionError, ParameterError

__all__ = [
    "HomodyneModel",
    "EntropyBound",
    "Ar1Fit",
    "g_star_residual",
    "solve_g_star",
    "delta_star",
    "noise_parameter",
    "adc_quantize",
    "adc_quantize_array",
    "adc_bin_edges",
    "dequantize",
    "fit_ar1_variances",
]

OUTER_TAILS = ("erf", "erfc")


@dataclass(frozen=True)
class HomodyneModel:
    """Measured variances plus ADC settings.

    Attributes
    ----------
    var_x : float
        Stationary variance of the analog signal.
    sigma_x2 : float
        Variance of the signal conditioned on its past.
    sigma_u2 : float
        Conditional variance of the excess (classical) noise.
    b : int
        ADC bit depth.
    R : float
        ADC range, in the units of the signal.
    """

    var_x: float
    sigma_x2: float
    sigma_u2: float
    b: int
    R: float

    def __post_init__(self):
        vals = (self.var_x, self.sigma_x2, self.sigma_u2, self.R)
        if not all(math.isfinite(v) for v in vals):
            raise ModelError(f"model values must be finite: {vals}")
        if int(self.b) != self.b or self.b < 2:
            raise ModelError(f"bit depth b must be an integer >= 2, got {self.b}")
        if self.R <= 0:
            raise ModelError(f"range R must be positive, got {self.R}")
        if self.sigma_u2 < 0:
            raise ModelError(f"sigma_u2 must be >= 0, got {self.sigma_u2}")
        if not self.sigma_x2 > self.sigma_u2:
            raise ModelError(f"need sigma_x2 > sigma_u2, got {self.sigma_x2} <= {self.sigma_u2}")
        if self.var_x < self.sigma_x2:
            raise ModelError(f"need var_x >= sigma_x2, got {self.var_x} < {self.sigma_x2}")

    @classmethod
    def from_text(cls, text: str) -> "HomodyneModel":
        """Parse ``key=value`` lines (``var_x, sigma_x2, sigma_u2, b, R``)."""
        kv = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ModelError(f"malformed model line {line!r}")
            kv[key.strip()] = val.strip()
        missing = {"var_x", "sigma_x2", "sigma_u2", "b", "R"} - kv.keys()
        if missing:
            raise ModelError(f"model is missing {sorted(missing)}")
        try:
            return cls(var_x=float(kv["var_x"]), sigma_x2=float(kv["sigma_x2"]),
                       sigma_u2=float(kv["sigma_u2"]), b=int(kv["b"]), R=float(kv["R"]))
        except ValueError as exc:
            raise ModelError(str(exc)) from exc

    def to_text(self) -> str:
        return "".join(f"{k}={getattr(self, k)}\n" for k in ("var_x", "sigma_x2", "sigma_u2", "b", "R"))


@dataclass(frozen=True)
class EntropyBound:
    b: int
    noise_n: float
    g_star: float
    delta_star: float
    unclamped: float

    @property
    def rate(self) -> float:
        """Min-entropy per raw bit, the planner's ``delta``."""
        return self.delta_star / self.b

    def rate_fraction(self, denominator: int = 10**6) -> Fraction:
        """``rate`` rounded down to a multiple of ``1/denominator``."""
        return Fraction(math.floor(self.rate * denominator), denominator)

    def span_bound(self, samples: int) -> float:
        """Min-entropy certified for a contiguous run of ``samples`` samples."""
        if samples < 0:
            raise ParameterError("span must be non-negative")
        return samples * self.delta_star

    def to_text(self) -> str:
        return (f"noise_n={self.noise_n!r}\ng_star={self.g_star!r}\n"
                f"delta_star={self.delta_star!r}\nrate={self.rate!r}\n")


def _inner_scale(b: int, R: float, range_scaled: bool) -> float:
    return (R if range_scaled else 1.0) / (2.0 ** b - 2)


def g_star_residual(g, b: int, R: float, outer_tail: str = "erf", range_scaled: bool = False):
    """Left minus right side of the defining equation of ``g*``.

    The default is ``erf(1/((2^b-2) g)) - erf(R/g)/2``. ``outer_tail="erfc"``
    uses ``erfc(R/g)/2`` on the right, and ``range_scaled`` puts ``R`` in
    place of the ``1`` on the left.
    """
    if outer_tail not in OUTER_TAILS:
        raise ParameterError(f"outer_tail must be one of {OUTER_TAILS}, got {outer_tail!r}")
    a = _inner_scale(b, R, range_scaled)
    g = np.asarray(g, dtype=float)
    tail = erf(R / g) if outer_tail == "erf" else erfc(R / g)
    res = erf(a / g) - 0.5 * tail
    return float(res) if res.ndim == 0 else res


def solve_g_star(b: int, R: float, tol: float = 1e-12, outer_tail: str = "erf",
                 range_scaled: bool = False, max_expansions: int = 2200) -> float:
    """Root of :func:`g_star_residual` by geometric bracketing then bisection.

    The bracket starts at ``R * 2^-b`` and is doubled (or halved) until the
    residual changes sign. Bisection then runs until the bracket is a few
    ulps wide.

    Raises
    ------
    NoSolutionError
        If no sign change is found within ``max_expansions`` steps, or the
        final residual exceeds ``tol``.
    """
    if int(b) != b or b < 2:
        raise ParameterError(f"bit depth b must be an integer >= 2, got {b}")
    if not R > 0 or not tol > 0:
        raise ParameterError("need R > 0 and tol > 0")

    def f(g):
        return g_star_residual(g, b, R, outer_tail, range_scaled)

    g0 = R * 2.0 ** -b
    f0 = f(g0)
    if f0 == 0:
        return g0
    step = 2.0 if f0 > 0 else 0.5
    lo, flo = g0, f0
    for _ in range(max_expansions):
        hi = lo * step
        if hi == 0 or not math.isfinite(hi):
            break
        fhi = f(hi)
        if fhi == 0:
            return hi
        if (fhi > 0) != (flo > 0):
            break
        lo, flo = hi, fhi
    else:
        hi = None
    if hi is None or hi == 0 or not math.isfinite(hi) or (fhi > 0) == (flo > 0):
        raise NoSolutionError(f"no sign change of the g* residual found for b={b}, R={R}")
    if lo > hi:
        lo, hi, flo, fhi = hi, lo, fhi, flo

    while hi - lo > 4 * math.ulp(hi):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            lo = hi = mid
            break
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    g = lo if abs(flo) <= abs(f(hi)) else hi
    if abs(f(g)) > tol:
        raise NoSolutionError(f"g* residual {abs(f(g))} exceeds tolerance {tol}")
    return g


def noise_parameter(model: HomodyneModel) -> float:
    return 0.5 * model.var_x / (model.sigma_x2 - model.sigma_u2) - 0.5


def delta_star(model: HomodyneModel, tol: float = 1e-12, outer_tail: str = "erf",
               range_scaled: bool = False) -> EntropyBound:
    """Certified min-entropy bits per quantized sample.

    Values outside ``[0, b]`` are clamped, with a
    :class:`CertifiedEntropyWarning`.
    """
    noise_n = noise_parameter(model)
    g = solve_g_star(model.b, model.R, tol, outer_tail, range_scaled)
    p_inner = float(erf(_inner_scale(model.b, model.R, range_scaled) / g))
    prefactor = (math.sqrt(noise_n) + math.sqrt(noise_n + 1.0)) ** 2
    raw = -math.log2(prefactor * p_inner)
    value = raw
    if raw <= 0:
        warnings.warn(f"certified min-entropy is {raw:.6g} bits per sample; extraction impossible",
                      CertifiedEntropyWarning, stacklevel=2)
        value = 0.0
    elif raw > model.b:
        warnings.warn(f"bound {raw:.6g} exceeds the bit depth {model.b}; clamped",
                      CertifiedEntropyWarning, stacklevel=2)
        value = float(model.b)
    return EntropyBound(b=model.b, noise_n=noise_n, g_star=g, delta_star=value, unclamped=raw)


def adc_bin_edges(b: int, R: float) -> np.ndarray:
    """The ``2^b - 1`` finite bin edges, from ``-R`` to ``R``."""
    levels = 2 ** b - 2
    k = np.arange(levels + 1, dtype=float)
    # symmetric form keeps both end points exactly at -R and R
    return R * ((2 * k - levels) / levels)


def adc_quantize_array(x, b: int, R: float) -> np.ndarray:
    """Level index ``j`` in ``[1, 2^b]`` for every value in ``x``.

    Interior bin ``j`` is ``(edge[j-2], edge[j-1]]``; values ``<= -R`` go to
    ``j = 1`` and values ``> R`` to ``j = 2^b``.
    """
    if int(b) != b or not 2 <= b <= 62:
        raise ParameterError(f"bit depth b must be an integer in [2, 62], got {b}")
    if not R > 0:
        raise ParameterError(f"range R must be positive, got {R}")
    x = np.asarray(x, dtype=float)
    levels = 2 ** b - 2
    j = 1 + np.ceil((x + R) * (levels / (2 * R)))
    j = np.clip(np.nan_to_num(j, nan=1.0), 2, levels + 1).astype(np.int64)
    # The closed form can be one bin off at the edges because of rounding;
    # compare against the edges themselves.
    upper = R * ((2 * (j - 1) - levels) / levels)
    j = np.where((x > upper) & (j <= levels), j + 1, j)
    lower = R * ((2 * (j - 2) - levels) / levels)
    j = np.where((x <= lower) & (j >= 3), j - 1, j)
    j = np.where(x <= -R, 1, j)
    j = np.where(x > R, 2 ** b, j)
    return j


def adc_quantize(x: float, b: int, R: float) -> int:
    return int(adc_quantize_array(np.array([x]), b, R)[0])


def dequantize(levels, b: int, R: float) -> np.ndarray:
    """Bin centres for levels ``j``; the two outer bins map half a bin beyond the range."""
    j = np.asarray(levels, dtype=float)
    w = 2 * R / (2 ** b - 2)
    return -R + w * (j - 1.5)


@dataclass(frozen=True)
class Ar1Fit:
    var_x: float
    sigma_x2: float
    phi: float
    count: int


def fit_ar1_variances(values, b: int | None = None, R: float | None = None) -> Ar1Fit:
    """Estimate ``var_x`` and ``sigma_x2`` assuming an AR(1) signal.

    ``values`` are analog readings, or stored ADC samples (level minus one)
    when ``b`` and ``R`` are given. The fit is a model assumption, not a
    certification.
    """
    x = np.asarray(values)
    if (b is None) != (R is None):
        raise ParameterError("give both b and R to fit quantized samples")
    if b is not None:
        x = dequantize(x.astype(np.int64) + 1, b, R)
    x = x.astype(float)
    if x.size < 3:
        raise ParameterError("need at least 3 values for an AR(1) fit")
    c = x - x.mean()
    var = float(c @ c) / c.size
    if var == 0:
        raise ModelError("constant recording; variances cannot be fitted")
    phi = float(c[1:] @ c[:-1]) / (c.size - 1) / var
    return Ar1Fit(var_x=var, sigma_x2=var * (1 - phi * phi), phi=phi, count=int(x.size))
