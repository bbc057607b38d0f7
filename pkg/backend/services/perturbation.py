"""
Perturbation Service
First-order weak-coupling predictions for circle doublets and segment levels,
and the equidistribution sequences behind the Wigner and normal limits
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from models.errors import DomainError, InsufficientDataError, UsageError
from models.schemas import (
    DoubletPrediction,
    PerturbationCheck,
    SegmentPrediction,
    Spectrum,
    SystemConfig,
    Topology,
    TWO_PI,
)
from services.rmt_reference import wigner_cdf
from services.statistics import ks_distance

logger = logging.getLogger(__name__)

# Refined roots of the free system are exact only to the double-root search accuracy
ROOT_ACCURACY = 1e-8
# measured second-order error is about 30 beta^2 (worst at the first doublet)
ERROR_CONSTANT = 40.0


def _phase_sums(indices: np.ndarray, positions: Sequence[float], factor: float) -> np.ndarray:
    """sum_k exp(i * factor * j * x_k) for every j in indices"""
    x = np.asarray(positions, dtype=float)
    if x.size == 0:
        return np.zeros(indices.shape, dtype=complex)
    return np.exp(1j * factor * np.outer(indices, x)).sum(axis=1)


def lambda_pm(j: int, positions: Sequence[float]) -> Tuple[float, float]:
    """
    First-order doublet splitting coefficients

    Args:
        j: Level index, j >= 1
        positions: Interaction positions

    Returns:
        (lambda_minus, lambda_plus) with lambda_plus = |sum_k e^{2 i j x_k}| / (2 pi)
    """
    if j < 1:
        raise DomainError(f"level index must be >= 1, got {j}")
    plus = float(np.abs(_phase_sums(np.array([j]), positions, 2.0))[0]) / TWO_PI
    return -plus, plus


def lambda_plus_sequence(positions: Sequence[float], count: int) -> np.ndarray:
    """lambda_plus_j for j = 1..count, vectorized"""
    j = np.arange(1, count + 1)
    return np.abs(_phase_sums(j, positions, 2.0)) / TWO_PI


def _validity_warnings(config: SystemConfig) -> List[str]:
    warnings = []
    if config.n and abs(config.beta) > 1.0 / (2.0 * config.n):
        message = (
            f"|beta|={abs(config.beta):.4g} exceeds 1/(2n)={1.0 / (2.0 * config.n):.4g}; "
            f"first-order predictions are outside their validity range"
        )
        logger.warning(message)
        warnings.append(message)
    return warnings


def perturbative_doublets(config: SystemConfig, count: int) -> Tuple[List[DoubletPrediction], List[str]]:
    """
    Predict the split doublets k = j -/+ |beta| lambda_plus_j for j = 1..count

    Returns:
        (predictions, warnings); warnings flag |beta| > 1/(2n)
    """
    if config.topology != Topology.CIRCLE:
        raise UsageError("doublet predictions require circle topology")
    if count < 1:
        raise DomainError(f"doublet count must be >= 1, got {count}")

    warnings = _validity_warnings(config)
    strength = abs(config.beta)
    plus = lambda_plus_sequence(config.positions, count + 1)
    predictions = []
    for j in range(1, count + 1):
        lam = float(plus[j - 1])
        predictions.append(
            DoubletPrediction(
                j=j,
                lambda_minus=-lam,
                lambda_plus=lam,
                k_lower=j - strength * lam,
                k_upper=j + strength * lam,
                predicted_odd_spacing=4.0 * strength * lam,
                predicted_even_spacing=2.0 - 2.0 * strength * (float(plus[j]) + lam),
            )
        )
    return predictions, warnings


def gamma_segment(j: int, positions: Sequence[float], beta: float = 0.0) -> Tuple[float, float]:
    """
    Segment level shift coefficient gamma_j = (1/2pi) sum_k sin(j x_k)

    The first-order root of the segment secular function near k = j/2 is
    j/2 - beta * gamma_j, so the unfolded spacings are 1 - 2 beta (gamma_{j+1} - gamma_j).

    Returns:
        (gamma_j, predicted k)
    """
    if j < 1:
        raise DomainError(f"level index must be >= 1, got {j}")
    gamma = float(np.sin(j * np.asarray(positions, dtype=float)).sum()) / TWO_PI
    return gamma, 0.5 * j - beta * gamma


def segment_predictions(config: SystemConfig, count: int) -> Tuple[List[SegmentPrediction], List[str]]:
    """First-order segment levels for j = 1..count"""
    if config.topology != Topology.SEGMENT:
        raise UsageError("segment predictions require segment topology")
    warnings = _validity_warnings(config)
    j = np.arange(1, count + 1)
    gamma = _phase_sums(j, config.positions, 1.0).imag / TWO_PI
    predictions = [
        SegmentPrediction(j=int(jj), gamma=float(g), k_pred=0.5 * jj - config.beta * float(g))
        for jj, g in zip(j, gamma)
    ]
    return predictions, warnings


def predicted_levels(config: SystemConfig, count: int) -> Tuple[np.ndarray, List[str]]:
    """
    Ascending first-order roots: 2*count doublet members on the circle, count levels on the segment
    """
    if config.topology == Topology.CIRCLE:
        doublets, warnings = perturbative_doublets(config, count)
        return np.ravel([[p.k_lower, p.k_upper] for p in doublets]), warnings
    levels, warnings = segment_predictions(config, count)
    return np.array([p.k_pred for p in levels]), warnings


def compare_with_exact(spectrum: Spectrum, count: int) -> PerturbationCheck:
    """
    Compare exact roots against the first-order predictions

    Args:
        spectrum: Roots of the same system (circle: at least 2*count, segment: at least count)
        count: Number of doublets (circle) or levels (segment) to compare

    Returns:
        PerturbationCheck with max error against the ERROR_CONSTANT * beta^2 bound
    """
    config = spectrum.config
    beta = config.beta
    predicted, warnings = predicted_levels(config, count)
    if spectrum.count < predicted.size:
        raise InsufficientDataError(f"need {predicted.size} roots, spectrum has {spectrum.count}")
    exact = spectrum.roots[: predicted.size]

    max_error = float(np.max(np.abs(exact - predicted)))
    bound = ERROR_CONSTANT * beta * beta
    within = max_error <= bound + ROOT_ACCURACY
    logger.info(f"Perturbation check over {count} levels: max error {max_error:.3e} (bound {bound:.3e})")
    if not within:
        warnings.append(f"max error {max_error:.3e} exceeds {ERROR_CONSTANT:g}*beta^2={bound:.3e}")
    return PerturbationCheck(
        topology=config.topology,
        beta=beta,
        levels_compared=count,
        max_error=max_error,
        error_bound=bound,
        within_bound=within,
        warnings=warnings,
    )


# ============ Equidistribution ============

def cosine_sequence(x: float, count: int) -> np.ndarray:
    """cos(2 j x) for j = 1..count"""
    return np.cos(2.0 * x * np.arange(1, count + 1))


def rescaled_sums(positions: Sequence[float], count: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sine and cosine sums scaled by sqrt(2)/sqrt(n) to unit variance

    Returns:
        (sum_k sin(j x_k), sum_k cos(2 j x_k)) times sqrt(2/n), for j = 1..count
    """
    n = len(positions)
    if n == 0:
        raise InsufficientDataError("rescaled sums need at least one position")
    j = np.arange(1, count + 1)
    scale = math.sqrt(2.0 / n)
    sines = _phase_sums(j, positions, 1.0).imag * scale
    cosines = _phase_sums(j, positions, 2.0).real * scale
    return sines, cosines


def equidistribution_report(
    positions: Sequence[float], count: int, position_index: Optional[int] = None
) -> Dict[str, float]:
    """
    KS distances of the equidistributed sequences to their limit laws

    Keys: ks_arcsine (cos(2 j x_i) vs arcsine on (-1, 1)), ks_sine_normal and
    ks_cosine_normal (rescaled sums vs standard normal), ks_lambda_wigner
    (lambda_plus_j / mean vs Wigner surmise).
    """
    if not positions:
        raise InsufficientDataError("equidistribution needs at least one position")
    index = 0 if position_index is None else position_index
    arcsine = stats.arcsine(loc=-1.0, scale=2.0)
    normal = stats.norm()

    sines, cosines = rescaled_sums(positions, count)
    lam = lambda_plus_sequence(positions, count)
    report = {
        "ks_arcsine": ks_distance(cosine_sequence(positions[index], count), arcsine.cdf),
        "ks_sine_normal": ks_distance(sines, normal.cdf),
        "ks_cosine_normal": ks_distance(cosines, normal.cdf),
        "ks_lambda_wigner": ks_distance(lam / lam.mean(), wigner_cdf),
    }
    summary = ", ".join(f"{key}={value:.4f}" for key, value in report.items())
    logger.info(f"Equidistribution (J={count}, n={len(positions)}): {summary}")
    return report
