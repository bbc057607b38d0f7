"""
Tests for unfolding, spacing distributions and number variance
"""

import math

import numpy as np
import pytest

from models.errors import InsufficientDataError
from models.schemas import Parity
from services.rmt_reference import poisson_reference, wigner_reference
from services.statistics import (
    compare,
    delta_F,
    empirical_cdf,
    histogram_density,
    ks_distance,
    ks_plus,
    ks_two_sample,
    number_variance,
    parity_split,
    small_s_exponent,
    spacing_series,
    unfold,
)


def wigner_sample(rng, size):
    return np.sqrt(-4.0 * np.log(rng.uniform(size=size)) / math.pi)


class TestUnfolding:
    def test_doubling(self):
        assert unfold(np.array([1.0, 1.0, 2.0, 2.0])).tolist() == [2.0, 2.0, 4.0, 4.0]

    def test_drop_low_levels(self):
        assert unfold(np.array([1.0, 1.0, 2.0, 2.0]), drop=1).tolist() == [2.0, 4.0, 4.0]

    def test_free_circle_parity(self):
        levels = unfold(np.repeat(np.arange(1.0, 51.0), 2))
        odd, even = parity_split(levels)
        assert np.all(odd == 0)
        assert np.all(even == 2)

    def test_free_segment(self):
        series = spacing_series(unfold(np.array([0.5, 1.0, 1.5])))
        assert series.levels.tolist() == [1.0, 2.0, 3.0]
        assert series.spacings.tolist() == [1.0, 1.0]

    def test_parity_classes_interleave(self, rng):
        levels = np.sort(rng.uniform(0, 100, size=101))
        odd, even = parity_split(levels)
        merged = np.empty(odd.size + even.size)
        merged[0::2], merged[1::2] = odd, even
        assert np.array_equal(merged, np.diff(levels))

    def test_too_few_levels(self):
        with pytest.raises(InsufficientDataError):
            parity_split(np.array([1.0, 2.0]))


class TestDistances:
    def test_ks_constant_sample(self):
        assert ks_distance([1.0, 1.0, 1.0], wigner_reference()) == pytest.approx(1 - math.exp(-math.pi / 4), abs=1e-9)
        assert ks_distance([1.0, 1.0, 1.0], wigner_reference()) == pytest.approx(0.544062, abs=1e-6)
        assert ks_plus([1.0, 1.0, 1.0], wigner_reference()) == pytest.approx(math.exp(-math.pi / 4), abs=1e-9)

    def test_ks_quantile_sample(self):
        size = 1000
        reference = wigner_reference()
        sample = [reference.ppf((i - 0.5) / size) for i in range(1, size + 1)]
        assert ks_distance(sample, reference) <= 1 / (2 * size) + 1e-9

    def test_empty_sample(self):
        with pytest.raises(InsufficientDataError):
            ks_distance([], wigner_reference())
        with pytest.raises(InsufficientDataError):
            delta_F([], wigner_reference())

    def test_delta_poisson_point_mass(self):
        # integral_0^1 (1-e^-s)^2 ds + integral_1^inf e^-2s ds
        assert delta_F([1.0], poisson_reference()) == pytest.approx(2 / math.e - 0.5, abs=1e-10)

    def test_delta_wigner_point_mass(self):
        expected = 1 + math.sqrt(2) / 2 - 2 * math.erf(math.sqrt(math.pi) / 2)
        assert delta_F([1.0], wigner_reference()) == pytest.approx(expected, abs=1e-10)

    def test_delta_accepts_plain_callable(self):
        assert delta_F([1.0], lambda s: -np.expm1(-np.asarray(s))) == pytest.approx(2 / math.e - 0.5, abs=1e-9)

    def test_delta_noise_floor(self, rng):
        size = 100_000
        value = delta_F(wigner_sample(rng, size), wigner_reference())
        # expectation (1/N) integral F(1-F) = (1 - 1/sqrt 2) / N
        assert 0.01 / size < value < 2.5 / size

    def test_delta_permutation_invariant(self, rng):
        sample = wigner_sample(rng, 500)
        shuffled = rng.permutation(sample)
        assert delta_F(sample, wigner_reference()) == delta_F(shuffled, wigner_reference())

    def test_two_sample(self, rng):
        assert ks_two_sample(wigner_sample(rng, 5000), wigner_sample(rng, 5000)) < 0.05

    def test_ecdf_steps(self):
        ecdf = empirical_cdf([3.0, 1.0, 2.0])
        assert ecdf(np.array([0.5, 1.0, 2.5, 3.0])).tolist() == pytest.approx([0, 1 / 3, 2 / 3, 1])


class TestHistogram:
    def test_uniform_density(self, rng):
        hist = histogram_density(rng.uniform(size=100_000), bin_width=0.1)
        widths = np.diff(hist.edges)
        assert np.sum(np.array(hist.densities) * widths) == pytest.approx(1.0)
        assert np.allclose(hist.densities[:10], 1.0, atol=0.06)

    def test_wigner_mode(self, rng):
        hist = histogram_density(wigner_sample(rng, 200_000), bin_width=0.05)
        peak = int(np.argmax(hist.densities))
        center = 0.5 * (hist.edges[peak] + hist.edges[peak + 1])
        assert center == pytest.approx(math.sqrt(2 / math.pi), abs=0.15)

    def test_single_bin_for_constant_sample(self):
        hist = histogram_density(np.full(50, 2.0))
        assert len(hist.densities) == 1
        assert hist.edges[0] <= 2.0 <= hist.edges[1]


class TestSmallS:
    def test_linear_repulsion(self, rng):
        assert small_s_exponent(wigner_sample(rng, 100_000)) == pytest.approx(1.0, abs=0.3)

    def test_cubic_repulsion_of_wigner_sums(self, rng):
        sample = wigner_sample(rng, 400_000) + wigner_sample(rng, 400_000)
        assert small_s_exponent(sample) == pytest.approx(3.0, abs=0.35)

    def test_uniform(self, rng):
        assert small_s_exponent(rng.uniform(size=100_000)) == pytest.approx(0.0, abs=0.3)

    def test_needs_samples(self, rng):
        with pytest.raises(InsufficientDataError):
            small_s_exponent(wigner_sample(rng, 100))


class TestNumberVariance:
    def test_rigid_sequence(self):
        curve = number_variance(np.arange(1.0, 2001.0), [0.0, 1.0, 2.0, 5.0])
        assert curve.variance == [0.0, 0.0, 0.0, 0.0]
        assert curve.windows[0] == 0

    def test_free_circle_doublets(self):
        levels = np.repeat(np.arange(2.0, 4002.0, 2.0), 2)
        curve = number_variance(levels, [1.0, 2.0])
        assert curve.variance[0] == pytest.approx(1.0, abs=0.01)
        assert curve.variance[1] == 0.0

    def test_poisson_sequence(self, rng):
        levels = np.cumsum(rng.exponential(size=20_000))
        curve = number_variance(levels, [5.0])
        assert curve.variance[0] == pytest.approx(5.0, rel=0.1)

    def test_window_longer_than_span(self):
        with pytest.raises(InsufficientDataError):
            number_variance(np.arange(1000.0), [5000.0])

    def test_needs_levels(self):
        with pytest.raises(InsufficientDataError):
            number_variance(np.arange(10.0), [1.0])


class TestCompare:
    def test_wigner_sample(self, rng):
        report = compare(2.5 * wigner_sample(rng, 20_000), Parity.ODD)
        assert report.mean_spacing == pytest.approx(2.5, rel=0.02)
        assert report.ks_W < 0.02
        assert report.ks_poisson > 0.1
        assert report.delta_F_W < report.delta_F_poisson
        assert report.histogram is not None

    def test_degenerate_sample(self):
        with pytest.raises(InsufficientDataError):
            compare(np.zeros(100), Parity.ODD)
