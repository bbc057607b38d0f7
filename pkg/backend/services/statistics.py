"""
Spacing Statistics Service
Unfolding, parity-split spacings, distribution distances and number variance
"""

import logging
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, stats

from models.errors import DomainError, InsufficientDataError
from models.schemas import (
    ComparisonReport,
    EmpiricalCDF,
    Histogram,
    NumberVarianceCurve,
    Parity,
    SpacingSeries,
    Spectrum,
)
from services.rmt_reference import goe_reference, poisson_reference, wigner_reference

logger = logging.getLogger(__name__)

CDF = Callable[[np.ndarray], np.ndarray]
SampleLike = Union[EmpiricalCDF, np.ndarray, Sequence[float]]

# Knots every KNOT_STEP keep the reference CDF smooth on each quadrature panel
KNOT_STEP = 0.005
QUADRATURE_ORDER = 8
TAIL_MASS = 1e-8

SMALL_S_MIN_SAMPLES = 10_000


def unfold(spectrum: Union[Spectrum, np.ndarray], drop: int = 0) -> np.ndarray:
    """
    Unfolded levels e_l = 2 k_l (density 1 by Weyl's law)

    Args:
        spectrum: Spectrum or ascending roots, already multiplicity-expanded
        drop: Number of low-lying levels to discard
    """
    roots = spectrum.roots if isinstance(spectrum, Spectrum) else np.asarray(spectrum, dtype=float)
    if drop < 0:
        raise DomainError(f"drop count must be non-negative, got {drop}")
    return 2.0 * roots[drop:]


def spacing_series(levels: np.ndarray) -> SpacingSeries:
    levels = np.asarray(levels, dtype=float)
    if levels.size < 2:
        raise InsufficientDataError(f"need at least 2 levels, got {levels.size}")
    return SpacingSeries(levels=levels, spacings=np.diff(levels))


def parity_split(levels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split spacings by index parity, anchored at the first retained level

    Returns:
        (odd spacings s_1, s_3, ..., even spacings s_2, s_4, ...)
    """
    if np.asarray(levels).size < 3:
        raise InsufficientDataError(f"need at least 3 levels, got {np.asarray(levels).size}")
    series = spacing_series(levels)
    return series.odd, series.even


def empirical_cdf(sample: SampleLike) -> EmpiricalCDF:
    if isinstance(sample, EmpiricalCDF):
        return sample
    values = np.sort(np.asarray(sample, dtype=float))
    if values.size == 0:
        raise InsufficientDataError("empty sample")
    return EmpiricalCDF(sample=values)


def _reference_cdf(reference) -> CDF:
    return reference.cdf if hasattr(reference, "cdf") else reference


def _tail_cutoff(reference) -> float:
    """Smallest s with 1 - F_ref(s) < TAIL_MASS"""
    if hasattr(reference, "ppf"):
        return float(reference.ppf(1.0 - TAIL_MASS))
    cdf = _reference_cdf(reference)
    upper = 8.0
    while float(cdf(np.array([upper]))[0]) < 1.0 - TAIL_MASS:
        upper *= 2.0
        if upper > 1e6:
            raise DomainError("reference CDF does not approach 1")
    return optimize.brentq(lambda s: float(cdf(np.array([s]))[0]) - (1.0 - TAIL_MASS), 0.0, upper)


def delta_F(empirical: SampleLike, reference) -> float:
    """
    Integrated squared difference between an ECDF and a reference CDF

    The ECDF is constant between consecutive sample points, so the integral is
    split at every sample point and every KNOT_STEP knot and each panel is
    integrated with Gauss-Legendre quadrature.

    Args:
        empirical: Sample or EmpiricalCDF
        reference: ReferenceDistribution or any vectorized CDF on [0, inf)

    Returns:
        integral over [0, s_cut] of (F(s) - F_ref(s))^2
    """
    ecdf = empirical_cdf(empirical)
    cdf = _reference_cdf(reference)
    s_cut = max(float(ecdf.sample[-1]), _tail_cutoff(reference))

    knots = np.arange(0.0, s_cut, KNOT_STEP)
    nodes = np.unique(np.concatenate([knots, ecdf.sample[ecdf.sample > 0], [s_cut]]))
    lower, upper = nodes[:-1], nodes[1:]
    level = ecdf(lower)

    x, w = np.polynomial.legendre.leggauss(QUADRATURE_ORDER)
    half = 0.5 * (upper - lower)
    points = (0.5 * (upper + lower))[:, None] + half[:, None] * x[None, :]
    integrand = (level[:, None] - cdf(points)) ** 2
    return float(np.sum(half * (integrand @ w)))


def ks_distance(empirical: SampleLike, reference) -> float:
    """Two-sided Kolmogorov-Smirnov distance sup |F - F_ref|, left limits included"""
    ecdf = empirical_cdf(empirical)
    return float(stats.kstest(ecdf.sample, _reference_cdf(reference)).statistic)


def ks_plus(empirical: SampleLike, reference) -> float:
    """One-sided distance sup (F - F_ref)"""
    ecdf = empirical_cdf(empirical)
    return float(stats.kstest(ecdf.sample, _reference_cdf(reference), alternative="greater").statistic)


def ks_two_sample(first: SampleLike, second: SampleLike) -> float:
    """sup |F_1 - F_2| between two empirical distributions"""
    a, b = empirical_cdf(first), empirical_cdf(second)
    return float(stats.ks_2samp(a.sample, b.sample).statistic)


def histogram_density(sample: SampleLike, bin_width: Optional[float] = None) -> Histogram:
    """
    Density-normalized histogram (area 1)

    Args:
        sample: Values to bin
        bin_width: Fixed bin width; None uses the Freedman-Diaconis rule
    """
    values = empirical_cdf(sample).sample
    if bin_width is None:
        densities, edges = np.histogram(values, bins="fd", density=True)
    else:
        if not bin_width > 0:
            raise DomainError(f"bin width must be positive, got {bin_width}")
        start = np.floor(values[0] / bin_width) * bin_width
        count = max(1, int(np.ceil((values[-1] - start) / bin_width)))
        if start + count * bin_width < values[-1]:
            count += 1
        edges = start + bin_width * np.arange(count + 1)
        densities, edges = np.histogram(values, bins=edges, density=True)
    return Histogram(edges=edges.tolist(), densities=densities.tolist())


def small_s_exponent(
    sample: SampleLike,
    quantile: float = 0.02,
    bins: int = 10,
    min_count: int = 50,
) -> float:
    """
    Small-spacing power law P(s) ~ s^a from a log-log fit

    Bins are log-spaced over the decade below the given sample quantile; only
    bins holding at least min_count samples enter the least-squares fit.

    Raises:
        InsufficientDataError: fewer than 10^4 samples or fewer than 3 usable bins
    """
    values = empirical_cdf(sample).sample
    if values.size < SMALL_S_MIN_SAMPLES:
        raise InsufficientDataError(
            f"small-s exponent needs {SMALL_S_MIN_SAMPLES} samples, got {values.size}"
        )
    s_hi = float(np.quantile(values, quantile))
    if not s_hi > 0:
        raise InsufficientDataError("no positive spacings in the small-s region", {"quantile": quantile})

    edges = np.geomspace(s_hi / 10.0, s_hi, bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    usable = counts >= min_count
    if usable.sum() < 3:
        raise InsufficientDataError(
            f"only {int(usable.sum())} small-s bins hold {min_count} samples",
            {"counts": counts.tolist()},
        )
    density = counts[usable] / (values.size * np.diff(edges)[usable])
    centers = np.sqrt(edges[:-1] * edges[1:])[usable]
    slope, _ = np.polyfit(np.log(centers), np.log(density), 1)
    return float(slope)


def number_variance(levels: np.ndarray, lengths: Sequence[float]) -> NumberVarianceCurve:
    """
    Variance of level counts in windows [x, x+L) sliding at stride L/4

    Raises:
        InsufficientDataError: fewer than 10^3 levels or L larger than the spectrum span
    """
    levels = np.sort(np.asarray(levels, dtype=float))
    if levels.size < 1000:
        raise InsufficientDataError(f"number variance needs 1000 levels, got {levels.size}")
    span = levels[-1] - levels[0]

    variance, windows = [], []
    for length in lengths:
        if length < 0:
            raise DomainError(f"window length must be non-negative, got {length}")
        if length == 0:
            variance.append(0.0)
            windows.append(0)
            continue
        if length > span:
            raise InsufficientDataError(f"window length {length} exceeds spectrum span {span:.3f}")
        starts = levels[0] + 0.25 * length * np.arange(int((span - length) / (0.25 * length)) + 1)
        counts = np.searchsorted(levels, starts + length, side="left") - np.searchsorted(
            levels, starts, side="left"
        )
        variance.append(float(np.var(counts)))
        windows.append(int(starts.size))
    return NumberVarianceCurve(lengths=[float(l) for l in lengths], variance=variance, windows=windows)


def compare(
    sample: np.ndarray,
    parity: Parity,
    bin_width: Optional[float] = None,
    with_histogram: bool = True,
) -> ComparisonReport:
    """
    Rescale a spacing sample to unit mean and measure its distance to Wigner, GOE and Poisson

    Raises:
        InsufficientDataError: empty sample or zero mean (fully degenerate spacings)
    """
    values = np.asarray(sample, dtype=float)
    if values.size == 0:
        raise InsufficientDataError(f"no {parity.value} spacings")
    mean = float(values.mean())
    if not mean > 0:
        raise InsufficientDataError(
            f"degenerate {parity.value} spacings (mean {mean:g})", {"parity": parity.value}
        )
    ecdf = empirical_cdf(values / mean)
    wigner, goe, poisson = wigner_reference(), goe_reference(), poisson_reference()

    try:
        exponent = small_s_exponent(ecdf)
    except InsufficientDataError as exc:
        logger.info(f"small-s exponent skipped for {parity.value} spacings: {exc}")
        exponent = None

    report = ComparisonReport(
        parity=parity,
        n_samples=ecdf.size,
        mean_spacing=mean,
        delta_F_W=delta_F(ecdf, wigner),
        delta_F_GOE=delta_F(ecdf, goe),
        delta_F_poisson=delta_F(ecdf, poisson),
        ks_W=ks_distance(ecdf, wigner),
        ks_GOE=ks_distance(ecdf, goe),
        ks_poisson=ks_distance(ecdf, poisson),
        small_s_exponent=exponent,
        histogram=histogram_density(ecdf, bin_width) if with_histogram else None,
    )
    logger.info(
        f"{parity.value} spacings (N={report.n_samples}): dF_W={report.delta_F_W:.3e}, "
        f"dF_GOE={report.delta_F_GOE:.3e}, KS_W={report.ks_W:.4f}"
    )
    return report
