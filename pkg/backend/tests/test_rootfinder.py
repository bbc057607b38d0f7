"""
Tests for the grid scan, refinement, tangency resolution and certified spectra
"""

import math

import numpy as np
import pytest

from models.errors import CompletenessError, DomainError, PreconditionError, UsageError
from models.schemas import ScanPolicy, Topology, TWO_PI
from services.rootfinder import (
    RootSet,
    SpectrumSolver,
    bracket_scan,
    find_spectrum,
    refine_brackets,
    refine_root,
    resolve_tangency,
)
from services.system_model import build_system


def closed_form_roots(alpha: float, count: int) -> np.ndarray:
    """Positive roots of cos(2 pi k) = sqrt(1 - beta^2), ground state excluded"""
    beta = (1 - alpha ** 2) / (1 + alpha ** 2)
    offset = math.acos(math.sqrt(1 - beta ** 2)) / TWO_PI
    m = np.arange(1, count // 2 + 2)
    return np.sort(np.concatenate([m - offset, m + offset]))[:count]


class TestBracketScan:
    def test_tangent_zeros_become_suspects(self):
        scan = bracket_scan(lambda k: np.cos(TWO_PI * k) - 1.0, (0.5, 2.5), 0.01)
        assert scan.bracket_count == 0
        for target in (1.0, 2.0):
            assert np.any((scan.suspect_lower < target) & (scan.suspect_upper > target))

    def test_sign_changes(self):
        scan = bracket_scan(lambda k: np.cos(TWO_PI * k) - 0.8, (0.5, 1.5), 0.01)
        assert scan.bracket_count == 2
        offset = math.acos(0.8) / TWO_PI
        for target, lo, hi in zip((1 - offset, 1 + offset), scan.lower, scan.upper):
            assert lo < target < hi
        assert scan.suspect_count == 0

    def test_empty_interval(self):
        scan = bracket_scan(np.sin, (2.0, 2.0), 0.01)
        assert scan.bracket_count == 0 and scan.suspect_count == 0

    def test_rejects_non_positive_step(self):
        with pytest.raises(DomainError):
            bracket_scan(np.sin, (0.0, 1.0), 0.0)


class TestRefinement:
    def test_linear_root(self):
        assert refine_root(lambda k: k - 0.3, (0.0, 1.0)) == pytest.approx(0.3, abs=1e-12)

    def test_root_on_bracket_end(self):
        assert refine_root(lambda k: k - 0.5, (0.5, 1.0)) == 0.5

    def test_no_sign_change(self):
        with pytest.raises(PreconditionError):
            refine_root(lambda k: k ** 2 + 1.0, (0.0, 1.0))

    def test_vectorized_brackets(self):
        lower = np.array([0.6, 1.6, 2.6])
        roots, residuals = refine_brackets(lambda k: np.sin(math.pi * k), lower, lower + 0.8)
        assert roots == pytest.approx([1.0, 2.0, 3.0], abs=1e-11)
        assert np.all(residuals < 1e-10)

    def test_relative_tolerance_at_large_k(self):
        root = refine_root(lambda k: k - 12345.678, (12345.0, 12346.0))
        assert abs(root - 12345.678) <= 1e-12 * 12345.678 * 2


class TestTangency:
    def test_no_roots(self):
        assert resolve_tangency(lambda k: (k - 1.0) ** 2 + 1e-4, (0.98, 1.02)) == []

    def test_two_simple_roots(self):
        found = resolve_tangency(lambda k: (k - 1.0) ** 2 - 1e-4, (0.98, 1.02))
        assert [m for _, m in found] == [1, 1]
        assert [r for r, _ in found] == pytest.approx([0.99, 1.01], abs=1e-11)

    def test_double_root(self):
        found = resolve_tangency(lambda k: (k - 1.0) ** 2, (0.98, 1.02))
        assert len(found) == 1
        root, multiplicity = found[0]
        assert multiplicity == 2
        assert root == pytest.approx(1.0, abs=1e-6)

    def test_negative_dip(self):
        found = resolve_tangency(lambda k: np.cos(TWO_PI * k) - 1.0, (0.99, 1.01))
        assert len(found) == 1 and found[0][1] == 2

    def test_dip_through_zero_on_negative_background(self):
        found = resolve_tangency(lambda k: 1e-4 - (k - 1.0) ** 2, (0.98, 1.02))
        assert [m for _, m in found] == [1, 1]
        assert [r for r, _ in found] == pytest.approx([0.99, 1.01], abs=1e-11)

    def test_narrow_crossing_on_negative_background(self):
        found = resolve_tangency(lambda k: np.cos(TWO_PI * k) - 0.999999, (0.99, 1.01))
        offset = math.acos(0.999999) / TWO_PI
        assert [r for r, _ in found] == pytest.approx([1 - offset, 1 + offset], abs=1e-10)


class TestSpectrum:
    def test_free_circle_doublets(self, free_circle):
        spectrum = find_spectrum(free_circle, count=20)
        assert spectrum.count == 20
        assert np.allclose(spectrum.roots, np.repeat(np.arange(1, 11), 2), atol=1e-7)
        assert np.all(spectrum.multiplicities == 2)
        assert np.all(spectrum.residuals < 1e-10)
        assert spectrum.diagnostics.ground_state is None
        assert spectrum.diagnostics.double_roots == 10

    def test_single_interaction_examples(self, single_interaction):
        spectrum = find_spectrum(single_interaction, count=4)
        assert spectrum.roots == pytest.approx([0.897584, 1.102416, 1.897584, 2.102416], abs=1e-6)
        assert spectrum.diagnostics.ground_state == pytest.approx(0.102416, abs=1e-6)

    @pytest.mark.parametrize("alpha", [1.2, 2.0, 5.0])
    def test_closed_form_oracle(self, alpha):
        spectrum = find_spectrum(build_system(alpha, n=1), count=400)
        assert np.max(np.abs(spectrum.roots - closed_form_roots(alpha, 400))) < 1e-10
        assert spectrum.diagnostics.count_check.passed

    def test_weak_coupling_ground_state_below_first_grid_point(self):
        # ground state at |beta|/(2 pi) ~ 0.0016, below the first grid point 0.005
        spectrum = find_spectrum(build_system(1.01, n=1), count=10)
        assert spectrum.roots == pytest.approx(closed_form_roots(1.01, 10), abs=1e-9)

    def test_include_ground_state(self, single_interaction):
        solver = SpectrumSolver(ScanPolicy(include_ground_state=True))
        spectrum = solver.find_spectrum(single_interaction, count=3)
        assert spectrum.roots == pytest.approx([0.102416, 0.897584, 1.102416], abs=1e-6)

    def test_free_segment(self):
        system = build_system(1.0, n=2, topology=Topology.SEGMENT)
        spectrum = find_spectrum(system, count=6)
        assert spectrum.roots == pytest.approx([0.5, 1.0, 1.5, 2.0, 2.5, 3.0], abs=1e-11)

    def test_k_max_mode(self):
        system = build_system(1.0, n=0, topology=Topology.SEGMENT)
        spectrum = find_spectrum(system, k_max=3.2)
        assert spectrum.count == 6

    def test_requires_count_or_k_max(self, free_circle):
        with pytest.raises(UsageError):
            find_spectrum(free_circle)
        with pytest.raises(DomainError):
            find_spectrum(free_circle, count=0)

    def test_stress_count_check(self):
        spectrum = find_spectrum(build_system(1.4, n=24), count=2000)
        report = spectrum.diagnostics.count_check
        assert report.passed
        assert report.max_deviation <= 28
        assert report.unresolved_windows == []
        assert np.all(np.diff(spectrum.roots) >= 0)

    def test_parallel_windows_match_serial(self):
        system = build_system(1.4, n=5)
        policy = ScanPolicy(window_width=3.0)
        serial = SpectrumSolver(policy, threads=1).find_spectrum(system, count=200)
        parallel = SpectrumSolver(policy, threads=4).find_spectrum(system, count=200)
        assert serial.diagnostics.window_count > 4
        assert np.array_equal(serial.roots, parallel.roots)

    @pytest.mark.parametrize("alpha, n", [(1.05, 24), (1.9, 9)])
    def test_roots_independent_of_grid_step(self, alpha, n):
        system = build_system(alpha, n=n)
        step = ScanPolicy().step_for(n)
        coarse = find_spectrum(system, count=1000)
        fine = SpectrumSolver(ScanPolicy(base_step=step / 16)).find_spectrum(system, count=1000)
        assert coarse.count == fine.count
        assert np.max(np.abs(coarse.roots - fine.roots)) < 1e-9


class TestRescans:
    # a coarse grid without tangency probing misses most of the narrow doublets
    coarse = dict(base_step=0.3, tangency_threshold=1e-300)

    def test_rescans_recover_missing_roots(self):
        solver = SpectrumSolver(ScanPolicy(max_rescans=3, **self.coarse))
        spectrum = solver.find_spectrum(build_system(1.2, n=1), count=40)
        assert spectrum.diagnostics.rescans >= 1
        assert spectrum.diagnostics.count_check.passed

    def test_completeness_error(self):
        solver = SpectrumSolver(ScanPolicy(max_rescans=0, **self.coarse))
        with pytest.raises(CompletenessError) as info:
            solver.find_spectrum(build_system(1.2, n=1), count=40)
        lower, upper = info.value.suspect_interval
        assert 0 <= lower < upper
        assert info.value.error_code == "COMPLETENESS_ERROR"


def test_count_check_detects_deficit():
    roots = np.array([1.0, 2.0, 3.0])
    found = RootSet(roots, np.ones(3, dtype=int), np.zeros(3))
    report = SpectrumSolver.count_check(found, k_max=10.0, bound=4)
    assert not report.passed
    assert report.worst_k == 10
    assert report.max_deviation == 17
