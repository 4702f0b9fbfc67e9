from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import erf, erfc, erfcinv, erfinv

from rbsextract.entropy import (HomodyneModel, adc_bin_edges, adc_quantize, adc_quantize_array,
                                delta_star, fit_ar1_variances, g_star_residual, noise_parameter,
                                solve_g_star)
from rbsextract.errors import CertifiedEntropyWarning, ModelError, NoSolutionError, ParameterError


def quantize_by_scan(x, b, R):
    # first bin whose upper edge is >= x; the last bin is unbounded
    edges = adc_bin_edges(b, R)
    for j, hi in enumerate(edges, start=1):
        if x <= hi:
            return j
    return 2 ** b


def fixed_point_g(b, R, outer_tail, iters=400):
    a = 1 / (2 ** b - 2)
    if outer_tail == "erf":
        g = R * 2.0 ** -b
        for _ in range(iters):
            g = a / erfinv(0.5 * erf(R / g))
    else:
        g = R
        for _ in range(iters):
            g = R / erfcinv(2 * erf(a / g))
    return g


class TestQuantizer:
    def test_outer_bins(self):
        assert adc_quantize(-5.0, 8, 4.0) == 1
        assert adc_quantize(5.0, 8, 4.0) == 256
        assert adc_quantize(-4.0, 8, 4.0) == 1

    def test_three_bit_example(self):
        assert adc_quantize(0.5, 3, 3.0) == 5
        assert adc_quantize(-3 + 1e-9, 3, 3.0) == 2
        assert adc_quantize(3.0, 3, 3.0) == 7

    def test_boundaries_go_to_lower_bin(self):
        b, R = 5, 2.0
        edges = adc_bin_edges(b, R)
        assert np.array_equal(adc_quantize_array(edges, b, R), np.arange(1, 2 ** b))

    @given(st.integers(2, 12), st.floats(0.01, 100),
           st.lists(st.floats(-200, 200, allow_nan=False), min_size=1, max_size=30))
    def test_matches_linear_scan(self, b, R, xs):
        got = adc_quantize_array(np.array(xs), b, R)
        assert got.tolist() == [quantize_by_scan(x, b, R) for x in xs]

    @given(st.integers(2, 10), st.floats(0.1, 10))
    def test_monotone_and_surjective(self, b, R):
        edges = adc_bin_edges(b, R)
        mids = np.concatenate([[-R - 1], (edges[:-1] + edges[1:]) / 2, [R + 1]])
        x = np.sort(np.concatenate([mids, np.linspace(-2 * R, 2 * R, 500)]))
        j = adc_quantize_array(x, b, R)
        assert np.all(np.diff(j) >= 0)
        assert set(j.tolist()) == set(range(1, 2 ** b + 1))


class TestGStar:
    @pytest.mark.parametrize("tail", ["erf", "erfc"])
    @pytest.mark.parametrize("b", [2, 4, 8, 12, 16, 24])
    @pytest.mark.parametrize("R", [0.1, 1.0, 4.0, 50.0])
    def test_residual_within_tolerance(self, tail, b, R):
        if tail == "erf" and R < 2 / (2 ** b - 2):
            # erf(x/2) > erf(x)/2 by concavity, so the residual never changes sign
            with pytest.raises(NoSolutionError):
                solve_g_star(b, R, 1e-12, tail)
            return
        g = solve_g_star(b, R, 1e-12, tail)
        assert g > 0
        assert abs(g_star_residual(g, b, R, tail)) <= 1e-12

    @pytest.mark.parametrize("tail", ["erf", "erfc"])
    def test_agrees_with_fixed_point_iteration(self, tail):
        rng = np.random.default_rng(11)
        for _ in range(100):
            b, R = int(rng.integers(3, 17)), float(rng.uniform(0.2, 8))
            g = solve_g_star(b, R, outer_tail=tail)
            assert abs(g - fixed_point_g(b, R, tail)) <= 1e-9 * g

    def test_inner_probability_in_bit_depth(self):
        # With erf on the right the root pins erf(.) near 1/2 for every b and
        # the inner term creeps up towards 1/2; with erfc it falls with b.
        R = 1.0
        lhs = {t: [float(erf(1 / ((2 ** b - 2) * solve_g_star(b, R, outer_tail=t))))
                   for b in (4, 8, 12, 16)] for t in ("erf", "erfc")}
        assert all(b >= a - 1e-15 for a, b in zip(lhs["erf"], lhs["erf"][1:]))
        assert all(0.49 < v <= 0.5 + 1e-12 for v in lhs["erf"])
        assert all(b <= a for a, b in zip(lhs["erfc"], lhs["erfc"][1:]))

    def test_range_scaled_variant(self):
        g = solve_g_star(8, 3.0, range_scaled=True, outer_tail="erfc")
        assert abs(erf(3.0 / (254 * g)) - 0.5 * erfc(3.0 / g)) <= 1e-12

    @pytest.mark.parametrize("b", [4, 8, 16])
    def test_range_scaled_erfc_is_scale_free(self, b):
        bits = []
        for R in (0.3, 1.0, 7.0):
            g = solve_g_star(b, R, outer_tail="erfc", range_scaled=True)
            assert g / R == pytest.approx(solve_g_star(b, 1.0, outer_tail="erfc"), rel=1e-9)
            bits.append(-math.log2(erf(R / ((2 ** b - 2) * g))))
        assert max(bits) - min(bits) < 1e-9 and max(bits) < b

    def test_no_bracket_reported(self):
        with pytest.raises(NoSolutionError):
            solve_g_star(8, 1.0, max_expansions=1)
        with pytest.raises(ParameterError):
            solve_g_star(1, 1.0)
        with pytest.raises(ParameterError):
            g_star_residual(1.0, 8, 1.0, outer_tail="tanh")


class TestDeltaStar:
    def test_zero_noise_limit(self):
        m = HomodyneModel(var_x=1.0, sigma_x2=1.0, sigma_u2=0.0, b=12, R=2.0)
        bound = delta_star(m)
        assert noise_parameter(m) == 0
        want = -math.log2(erf(1 / ((2 ** 12 - 2) * bound.g_star)))
        assert bound.delta_star == pytest.approx(want, rel=1e-14)

    @pytest.mark.parametrize("tail", ["erf", "erfc"])
    def test_nonincreasing_in_noise(self, tail):
        values = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CertifiedEntropyWarning)
            for su in np.linspace(0, 0.45, 20):
                bound = delta_star(HomodyneModel(0.5, 0.5, float(su), 16, 4.0), outer_tail=tail)
                values.append((bound.noise_n, bound.unclamped, bound.delta_star))
        noise, raw, clamped = map(np.array, zip(*values))
        assert np.all(np.diff(noise) > 0)
        assert np.all(np.diff(raw) <= 0) and np.all(np.diff(clamped) <= 0)

    def test_nonpositive_bound_warns_and_clamps(self):
        m = HomodyneModel(var_x=1.0, sigma_x2=0.5, sigma_u2=0.1, b=16, R=4.0)
        with pytest.warns(CertifiedEntropyWarning):
            bound = delta_star(m)
        assert bound.delta_star == 0.0 and bound.unclamped < 0

    def test_span_and_rate(self):
        bound = delta_star(HomodyneModel(1.0, 1.0, 0.0, 16, 4.0), outer_tail="erfc",
                           range_scaled=True)
        assert 0 < bound.delta_star <= 16
        assert bound.span_bound(31) == pytest.approx(31 * bound.delta_star)
        assert bound.rate_fraction() <= bound.rate

    @pytest.mark.parametrize("kwargs", [
        dict(var_x=1, sigma_x2=0.5, sigma_u2=0.5, b=8, R=1),
        dict(var_x=0.4, sigma_x2=0.5, sigma_u2=0.0, b=8, R=1),
        dict(var_x=1, sigma_x2=0.5, sigma_u2=-0.1, b=8, R=1),
        dict(var_x=1, sigma_x2=0.5, sigma_u2=0.0, b=1, R=1),
        dict(var_x=1, sigma_x2=0.5, sigma_u2=0.0, b=8, R=0),
    ])
    def test_model_invariants(self, kwargs):
        with pytest.raises(ModelError):
            HomodyneModel(**kwargs)

    def test_model_text(self):
        m = HomodyneModel(1.0, 0.5, 0.01, 16, 4.0)
        assert HomodyneModel.from_text(m.to_text()) == m
        with pytest.raises(ModelError):
            HomodyneModel.from_text("var_x=1\n")


class TestAr1Fit:
    def test_recovers_known_process(self):
        rng = np.random.default_rng(3)
        phi, s2 = 0.6, 0.64
        w = rng.normal(0, math.sqrt(s2), 200_000)
        x = np.empty_like(w)
        x[0] = w[0] / math.sqrt(1 - phi ** 2)
        for t in range(1, w.size):
            x[t] = phi * x[t - 1] + w[t]
        fit = fit_ar1_variances(x)
        assert fit.phi == pytest.approx(phi, abs=0.01)
        assert fit.var_x == pytest.approx(1.0, rel=0.02)
        assert fit.sigma_x2 == pytest.approx(s2, rel=0.02)

    def test_bad_input(self):
        with pytest.raises(ParameterError):
            fit_ar1_variances([1.0, 2.0])
        with pytest.raises(ModelError):
            fit_ar1_variances(np.ones(10))
        with pytest.raises(ParameterError):
            fit_ar1_variances(np.arange(10), b=8)
