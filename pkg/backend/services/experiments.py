"""
Experiment Runner Service
Runs the spectrum, analysis, sweep, perturbation, GOE table and self-test experiments
and writes their data files and summaries
"""

import logging
import math
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator, List, Optional

import numpy as np
from scipy import stats

from config import RunConfig
from models.errors import InsufficientDataError, SpectralError
from models.schemas import (
    APP_VERSION,
    ComparisonReport,
    Ensemble,
    Parity,
    RunSummary,
    SelfTestCheck,
    Spectrum,
    SweepRow,
    Topology,
)
from services import io
from services.perturbation import compare_with_exact, equidistribution_report, predicted_levels
from services.rmt_reference import (
    DEFAULT_TABLE_PATH,
    GOE_WIGNER_DELTA,
    SERIES_GOE_WIGNER_DELTA,
    generate_goe_table,
    goe_mc_oracle,
    goe_reference,
    load_goe_table,
    number_variance_reference,
    reference_delta,
    wigner_reference,
)
from services.rootfinder import SpectrumSolver
from services.statistics import (
    compare,
    empirical_cdf,
    ks_distance,
    ks_two_sample,
    number_variance,
    parity_split,
    spacing_series,
    unfold,
)
from services.system_model import (
    build_system,
    evaluate_secular,
    secular_circle,
    secular_circle_expansion,
    transfer_matrix,
)

logger = logging.getLogger(__name__)


class ExperimentRunner:
    """Service that runs one subcommand against a RunConfig"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.output = Path(config.output)
        self.timings: Dict[str, float] = {}
        self.warnings: List[str] = []

    @contextmanager
    def _phase(self, name: str) -> Iterator[None]:
        started = time.time()
        logger.info(f"Phase '{name}' started")
        yield
        self.timings[name] = round(time.time() - started, 3)
        logger.info(f"Phase '{name}' finished in {self.timings[name]:.2f}s")

    def _warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)

    def _summary(self, command: str, **fields) -> RunSummary:
        return RunSummary(
            command=command,
            version=APP_VERSION,
            config=self.config.echo(),
            timings=dict(self.timings),
            warnings=list(self.warnings),
            **fields,
        )

    def _finish(self, summary: RunSummary) -> RunSummary:
        io.write_summary(self.output / f"summary_{summary.command}.json", summary)
        return summary

    def _solve(self, alpha: Optional[float] = None, n: Optional[int] = None, count: Optional[int] = None) -> Spectrum:
        system = self.config.system(alpha, n)
        solver = SpectrumSolver(self.config.scan_policy(), threads=self.config.threads)
        return solver.find_spectrum(system, count=count or self.config.roots)

    # ============ spectrum ============

    def cmd_spectrum(self) -> RunSummary:
        """Compute the first N roots and write the roots table"""
        with self._phase("solve"):
            spectrum = self._solve()
        with self._phase("write"):
            io.write_roots(self.output / "roots.txt", spectrum)
        diagnostics = spectrum.diagnostics
        if diagnostics.ground_state is not None:
            logger.info(f"Ground state k={diagnostics.ground_state:.12f} excluded from the spectrum")
        return self._finish(
            self._summary(
                "spectrum",
                root_count=spectrum.count,
                count_check=diagnostics.count_check,
                metrics={
                    "max_residual": diagnostics.max_residual,
                    "double_roots": float(diagnostics.double_roots),
                    "rescans": float(diagnostics.rescans),
                },
            )
        )

    # ============ analyze ============

    def cmd_analyze(self, roots_path: Optional[str] = None) -> RunSummary:
        """Spacing statistics of a computed or loaded spectrum"""
        config = self.config
        count_check = None
        with self._phase("roots"):
            if roots_path:
                roots = io.read_roots(roots_path)
                logger.info(f"Loaded {roots.size} roots from {roots_path}")
            else:
                spectrum = self._solve()
                count_check = spectrum.diagnostics.count_check
                roots = spectrum.roots
                io.write_roots(self.output / "roots.txt", spectrum)

        with self._phase("spacings"):
            levels = unfold(roots, drop=config.drop)
            if levels.size < 3:
                raise InsufficientDataError(f"need at least 3 levels after dropping {config.drop}, got {levels.size}")
            odd, even = parity_split(levels)
            series = spacing_series(levels)
            samples = {Parity.ODD: odd, Parity.EVEN: even, Parity.ALL: series.spacings}
            mean_all = float(series.spacings.mean())
            if abs(mean_all - 1.0) > 3.0 / math.sqrt(series.spacings.size):
                self._warn(f"mean spacing {mean_all:.5f} deviates from unit density")
            for parity, sample in samples.items():
                io.write_series(
                    self.output / f"spacings_{parity.value}.txt",
                    {"index": np.arange(1, sample.size + 1), "s": sample},
                    {"parity": parity.value, "mean": float(sample.mean()) if sample.size else float("nan")},
                )

        comparisons: Dict[str, ComparisonReport] = {}
        with self._phase("compare"):
            for parity, sample in samples.items():
                try:
                    report = compare(sample, parity, bin_width=config.bin_width)
                except InsufficientDataError as exc:
                    self._warn(f"{parity.value} spacings skipped: {exc.message}")
                    continue
                comparisons[parity.value] = report
                if report.small_s_exponent is None:
                    self._warn(f"{parity.value} spacings: small-s exponent undetermined (too few spacings near s = 0)")
                self._write_distribution_files(parity, sample / report.mean_spacing, report)

        metrics: Dict[str, float] = {}
        if odd.size and even.size and odd.mean() > 0 and even.mean() > 0:
            metrics["ks_odd_even"] = ks_two_sample(odd / odd.mean(), even / even.mean())
        if config.topology == Topology.SEGMENT and series.spacings.size > 1:
            # location and scale fitted to the sample
            fitted = stats.norm(*stats.norm.fit(series.spacings))
            metrics["ks_normal_fit"] = ks_distance(series.spacings, fitted.cdf)

        curve = None
        with self._phase("number_variance"):
            span = levels[-1] - levels[0]
            lengths = [L for L in config.lengths if L < span]
            dropped = [L for L in config.lengths if L >= span]
            if dropped:
                self._warn(f"number variance lengths {dropped} dropped: not shorter than the spectrum span {span:.3f}")
            try:
                curve = number_variance(levels, lengths)
            except InsufficientDataError as exc:
                self._warn(f"number variance skipped: {exc.message}")
            else:
                positive = np.array([max(L, 1e-12) for L in curve.lengths])
                io.write_series(
                    self.output / "number_variance.txt",
                    {
                        "L": np.array(curve.lengths),
                        "sigma2": np.array(curve.variance),
                        "windows": np.array(curve.windows),
                        "GOE": number_variance_reference(Ensemble.GOE, positive),
                        "GUE": number_variance_reference(Ensemble.GUE, positive),
                        "Poisson": number_variance_reference(Ensemble.POISSON, positive),
                    },
                )

        return self._finish(
            self._summary(
                "analyze",
                root_count=int(roots.size),
                count_check=count_check,
                comparisons=comparisons,
                small_s_exponents={key: report.small_s_exponent for key, report in comparisons.items()},
                number_variance=curve,
                metrics=metrics,
            )
        )

    def _write_distribution_files(self, parity: Parity, scaled: np.ndarray, report: ComparisonReport) -> None:
        ecdf = empirical_cdf(scaled)
        io.write_series(
            self.output / f"ecdf_{parity.value}.txt",
            {"s": ecdf.sample, "F": np.arange(1, ecdf.size + 1) / ecdf.size},
        )
        if report.histogram is not None:
            edges = np.array(report.histogram.edges)
            io.write_series(
                self.output / f"histogram_{parity.value}.txt",
                {"left": edges[:-1], "right": edges[1:], "density": np.array(report.histogram.densities)},
            )

    # ============ sweep ============

    def cmd_sweep(self) -> RunSummary:
        """Odd-spacing distances per alpha (or per n); failing points are recorded, not fatal"""
        config = self.config
        if config.sweep_over == "n":
            if not config.n_values:
                raise InsufficientDataError("sweep over n requires n_values")
            points = [(config.alpha[0], n) for n in config.n_values]
        else:
            points = [(alpha, config.n) for alpha in config.alpha]

        rows: List[SweepRow] = []
        with self._phase("sweep"):
            for alpha, n in points:
                rows.append(self._sweep_point(alpha, n))

        io.write_series(
            self.output / "sweep.txt",
            {
                "alpha": np.array([r.alpha for r in rows]),
                "n": np.array([r.n for r in rows]),
                "roots": np.array([r.root_count for r in rows]),
                "dF_W": np.array([np.nan if r.delta_F_W is None else r.delta_F_W for r in rows]),
                "dF_GOE": np.array([np.nan if r.delta_F_GOE is None else r.delta_F_GOE for r in rows]),
                "ks_W": np.array([np.nan if r.ks_W is None else r.ks_W for r in rows]),
                "ks_GOE": np.array([np.nan if r.ks_GOE is None else r.ks_GOE for r in rows]),
            },
            {"sweep_over": config.sweep_over},
        )
        return self._finish(self._summary("sweep", sweep=rows))

    def _sweep_point(self, alpha: float, n: int) -> SweepRow:
        try:
            spectrum = self._solve(alpha, n)
            odd, _ = parity_split(unfold(spectrum, drop=self.config.drop))
            report = compare(odd, Parity.ODD, with_histogram=False)
        except InsufficientDataError as exc:
            self._warn(f"sweep point alpha={alpha}, n={n} degenerate: {exc.message}")
            return SweepRow(alpha=alpha, n=n, status="degenerate", error=exc.message)
        except SpectralError as exc:
            self._warn(f"sweep point alpha={alpha}, n={n} failed: {exc.message}")
            return SweepRow(alpha=alpha, n=n, status="failed", error=exc.message)
        return SweepRow(
            alpha=alpha,
            n=n,
            root_count=spectrum.count,
            delta_F_W=report.delta_F_W,
            delta_F_GOE=report.delta_F_GOE,
            ks_W=report.ks_W,
            ks_GOE=report.ks_GOE,
        )

    # ============ perturb-check ============

    def cmd_perturb_check(self) -> RunSummary:
        """Exact roots against first-order predictions, plus the equidistribution report"""
        config = self.config
        levels = config.perturb_levels
        system = config.system()
        count = 2 * levels if system.topology == Topology.CIRCLE else levels

        with self._phase("solve"):
            spectrum = self._solve(count=count)
        with self._phase("compare"):
            check = compare_with_exact(spectrum, levels)
            predicted, _ = predicted_levels(system, levels)
            exact = spectrum.roots[: predicted.size]
            io.write_series(
                self.output / "perturbation.txt",
                {
                    "index": np.arange(1, predicted.size + 1),
                    "k_exact": exact,
                    "k_pred": predicted,
                    "error": np.abs(exact - predicted),
                },
                {"beta": system.beta, "error_bound": check.error_bound},
            )
        if system.n:
            with self._phase("equidistribution"):
                check.equidistribution = equidistribution_report(
                    system.positions, config.equidistribution_count
                )
        for message in check.warnings:
            self.warnings.append(message)
        return self._finish(
            self._summary(
                "perturb-check",
                root_count=spectrum.count,
                count_check=spectrum.diagnostics.count_check,
                perturbation=check,
            )
        )

    # ============ rmt-table ============

    def cmd_rmt_table(self) -> RunSummary:
        """Generate the GOE spacing table, write it and report its self-check values"""
        config = self.config
        target = Path(config.goe_table) if config.goe_table else DEFAULT_TABLE_PATH
        with self._phase("generate"):
            table = generate_goe_table(accuracy=config.rmt_accuracy)
        io.write_goe_table(target, table)
        load_goe_table.cache_clear()
        goe_reference.cache_clear()
        print(
            f"delta(F_GOE - F_W) = {table.metadata.delta_goe_wigner:.6e} "
            f"(exact {GOE_WIGNER_DELTA:.4e}, series approximation {SERIES_GOE_WIGNER_DELTA:.4e})"
        )

        metrics = {"delta_goe_wigner": table.metadata.delta_goe_wigner}
        if config.mc_samples:
            with self._phase("mc_oracle"):
                sample = goe_mc_oracle(config.mc_dim, config.mc_samples, config.seed, config.threads)
                metrics["ks_table_vs_mc"] = ks_distance(sample, goe_reference(str(target)))
                metrics["ks_wigner_vs_mc"] = ks_distance(sample, wigner_reference())
                metrics["mc_mean"] = float(sample.mean())
        return self._finish(self._summary("rmt-table", goe_table=table.metadata, metrics=metrics))

    # ============ selftest ============

    def selftest(self) -> RunSummary:
        """Quick end-to-end checks of the solver and references"""
        checks: List[SelfTestCheck] = []
        rng = np.random.default_rng(self.config.seed)

        with self._phase("selftest"):
            solver = SpectrumSolver()
            free = solver.find_spectrum(build_system(1.0, n=3), count=20)
            expected = np.repeat(np.arange(1, 11), 2).astype(float)
            checks.append(self._check("free_circle_roots", float(np.max(np.abs(free.roots - expected))), 1e-7))

            system = build_system(2.0, n=1)
            offset = math.acos(math.sqrt(1.0 - system.beta ** 2)) / (2.0 * math.pi)
            closed = np.sort(np.concatenate([np.arange(1, 51) - offset, np.arange(1, 51) + offset]))
            found = solver.find_spectrum(system, count=100)
            checks.append(self._check("single_interaction_closed_form", float(np.max(np.abs(found.roots - closed))), 1e-10))

            worst = 0.0
            for n in (1, 2, 3, 4):
                system = build_system(float(rng.uniform(0.5, 2.0)), n=n)
                for k in rng.uniform(0.0, 50.0, size=50):
                    worst = max(worst, abs(secular_circle(k, system).value - secular_circle_expansion(k, system)))
            checks.append(self._check("expansion_oracle", worst, 1e-9))

            system = build_system(1.7, n=5)
            ks = rng.uniform(0.0, 50.0, size=50)
            kernel = evaluate_secular(ks, system)
            literal = np.array([secular_circle(k, system).value for k in ks])
            checks.append(self._check("kernel_vs_matrix_product", float(np.max(np.abs(kernel - literal))), 1e-9))

            det = abs(np.linalg.det(transfer_matrix(3.3, 1.7, 1.1)) - 1.0)
            checks.append(self._check("unimodularity", float(det), 1e-12))

            delta = reference_delta(goe_reference(self.config.goe_table), wigner_reference())
            checks.append(self._check("goe_wigner_constant", abs(delta - GOE_WIGNER_DELTA), 1e-6))

        for check in checks:
            if not check.passed:
                self._warn(f"self-test '{check.name}' failed: {check.value:.3e} > {check.threshold:.1e}")
        return self._finish(self._summary("selftest", selftest=checks))

    @staticmethod
    def _check(name: str, value: float, threshold: float) -> SelfTestCheck:
        passed = bool(value <= threshold)
        logger.info(f"self-test {name}: {value:.3e} (threshold {threshold:.1e}) {'ok' if passed else 'FAILED'}")
        return SelfTestCheck(name=name, passed=passed, value=value, threshold=threshold)
