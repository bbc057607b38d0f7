"""
System Model Service
Transfer matrices and secular functions for a particle on a circle or segment
with scale-free point interactions
"""

import logging
import math
from itertools import combinations
from typing import Callable, List, Optional, Sequence

import numpy as np
from sympy import prime

from models.errors import DomainError, UsageError
from models.schemas import SecularValue, SystemConfig, Topology, TWO_PI

logger = logging.getLogger(__name__)

# Combinatorial cost guard for the trigonometric expansions (2^n subsets)
MAX_EXPANSION_N = 12

SecularFunction = Callable[[np.ndarray], np.ndarray]


def beta_of_alpha(alpha: float) -> float:
    """
    Reflection parameter beta = (1 - alpha^2) / (1 + alpha^2)

    Args:
        alpha: Coupling, must be positive

    Returns:
        beta in (-1, 1); beta(1/alpha) = -beta(alpha)
    """
    if not (alpha > 0) or not math.isfinite(alpha):
        raise DomainError(f"alpha must be positive and finite, got {alpha}", {"alpha": alpha})
    return (1.0 - alpha * alpha) / (1.0 + alpha * alpha)


def prime_positions(n: int) -> List[float]:
    """
    Rationally independent positions x_k = 2*pi*sqrt(p_k)/sqrt(p_{n+1})

    Args:
        n: Number of interactions; 0 gives the free system

    Returns:
        Strictly increasing positions in (0, 2*pi)
    """
    if n < 0:
        raise DomainError(f"interaction count must be non-negative, got {n}")
    if n == 0:
        return []
    primes = [int(prime(k)) for k in range(1, n + 2)]
    scale = TWO_PI / math.sqrt(primes[-1])
    return [scale * math.sqrt(p) for p in primes[:-1]]


def build_system(
    alpha: float,
    n: Optional[int] = None,
    positions: Optional[Sequence[float]] = None,
    topology: Topology = Topology.CIRCLE,
) -> SystemConfig:
    """
    Build a validated SystemConfig from either n (prime positions) or explicit positions.

    Explicit positions are accepted as given; their rational independence is not checked.
    """
    beta_of_alpha(alpha)
    if positions is None:
        positions = prime_positions(n or 0)
    elif n is not None and n != len(positions):
        raise DomainError(f"n={n} does not match {len(positions)} explicit positions")
    return SystemConfig(topology=topology, alpha=alpha, positions=tuple(positions))


# ============ Transfer Matrices ============

def transfer_matrix(k: float, alpha: float, x_j: float) -> np.ndarray:
    """Matrix C_j mapping (A_{j-1}, B_{j-1}) to (A_j, B_j) across the interaction at x_j"""
    beta_of_alpha(alpha)
    diag = 0.5 * (1.0 / alpha + alpha)
    off = 0.5 * (1.0 / alpha - alpha)
    phase = np.exp(2j * k * x_j)
    return np.array([[diag, off / phase], [off * phase, diag]], dtype=complex)


def boundary_matrix(k: float) -> np.ndarray:
    """Periodic closure C_P = diag(e^{2 i pi k}, e^{-2 i pi k})"""
    phase = np.exp(2j * math.pi * k)
    return np.array([[phase, 0.0], [0.0, 1.0 / phase]], dtype=complex)


def _interaction_product(k: float, config: SystemConfig) -> np.ndarray:
    product = np.eye(2, dtype=complex)
    for x in config.positions:
        product = transfer_matrix(k, config.alpha, x) @ product
    return product


def _normalization(config: SystemConfig) -> float:
    return (1.0 - config.beta ** 2) ** (config.n / 2.0)


def _require(config: SystemConfig, topology: Topology) -> None:
    if config.topology != topology:
        raise UsageError(
            f"operation requires {topology.value} topology, got {config.topology.value}",
            {"topology": config.topology.value},
        )


# ============ Secular Functions (literal matrix products) ============

def secular_determinant(k: float, config: SystemConfig) -> complex:
    """Un-normalized det(C_P C_n ... C_1 - I) for the circle"""
    _require(config, Topology.CIRCLE)
    monodromy = boundary_matrix(k) @ _interaction_product(k, config)
    return complex(np.linalg.det(monodromy - np.eye(2)))


def secular_circle(k: float, config: SystemConfig) -> SecularValue:
    """
    Normalized circle secular function (1-beta^2)^{n/2} (tr M - 2) / 2

    Uses det(M - I) = 2 - tr M for the unimodular monodromy M = C_P C_n ... C_1.
    For alpha = 1 this is cos(2 pi k) - 1.
    """
    _require(config, Topology.CIRCLE)
    monodromy = boundary_matrix(k) @ _interaction_product(k, config)
    z = _normalization(config) * (np.trace(monodromy) - 2.0) / 2.0
    return SecularValue(value=float(z.real), residual_imag=float(abs(z.imag)))


def secular_segment(k: float, config: SystemConfig) -> SecularValue:
    """
    Normalized segment secular function with Dirichlet ends

    (A_0, B_0) = (1, -1) is propagated to (A_n, B_n); the value is
    (1-beta^2)^{n/2} (e^{2 i pi k} A_n + e^{-2 i pi k} B_n) / (2i), equal to sin(2 pi k) when alpha = 1.
    """
    _require(config, Topology.SEGMENT)
    coefficients = _interaction_product(k, config) @ np.array([1.0, -1.0], dtype=complex)
    phase = np.exp(2j * math.pi * k)
    z = _normalization(config) * (phase * coefficients[0] + coefficients[1] / phase) / 2j
    return SecularValue(value=float(z.real), residual_imag=float(abs(z.imag)))


# ============ Trigonometric Expansions (oracles) ============

def _alternating_phases(positions: np.ndarray, m: int) -> np.ndarray:
    """x_{i1} - x_{i2} + x_{i3} - ... over all ordered subsets of size m"""
    signs = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
    subsets = np.array(list(combinations(range(positions.size), m)), dtype=int)
    return positions[subsets] @ signs


def _check_expansion_size(config: SystemConfig) -> None:
    if config.n > MAX_EXPANSION_N:
        raise UsageError(
            f"expansion over 2^{config.n} subsets refused (n <= {MAX_EXPANSION_N})",
            {"n": config.n},
        )


def secular_circle_expansion(k: float, config: SystemConfig) -> float:
    """
    Finite trigonometric series of the circle secular function

    cos(2k pi) - (1-beta^2)^{n/2} + sum over even m <= n of
    beta^m sum_{i1<...<im} cos(2k(x_{i1} - x_{i2} + ... - x_{im} + pi))
    """
    _require(config, Topology.CIRCLE)
    _check_expansion_size(config)
    beta = config.beta
    positions = np.asarray(config.positions, dtype=float)
    total = math.cos(TWO_PI * k) - _normalization(config)
    for m in range(2, config.n + 1, 2):
        phases = _alternating_phases(positions, m)
        total += beta ** m * float(np.cos(2.0 * k * (phases + math.pi)).sum())
    return total


def secular_segment_expansion(k: float, config: SystemConfig) -> float:
    """
    Finite trigonometric series of the segment secular function

    sin(2k pi) + sum over m >= 1 of (-1)^m beta^m sum_{i1<...<im}
    sin(2k(pi + s_m (x_{i1} - x_{i2} + ...))), s_m = +1 for even m and -1 for odd m.
    The m = 1 term is beta * sum sin(2k(x_i - pi)).
    """
    _require(config, Topology.SEGMENT)
    _check_expansion_size(config)
    beta = config.beta
    positions = np.asarray(config.positions, dtype=float)
    total = math.sin(TWO_PI * k)
    for m in range(1, config.n + 1):
        orientation = 1.0 if m % 2 == 0 else -1.0
        phases = _alternating_phases(positions, m)
        terms = np.sin(2.0 * k * (math.pi + orientation * phases))
        total += (-beta) ** m * float(terms.sum())
    return total


# ============ Vectorized Kernels ============

def circle_kernel(k: np.ndarray, beta: float, positions: Sequence[float]) -> np.ndarray:
    """
    Vectorized normalized circle secular function

    The normalized factors D_j = sqrt(1-beta^2) C_j have the form [[1, q], [conj(q), 1]],
    q = beta e^{-2ikx_j}; their products keep the form [[a, b], [conj(b), conj(a)]],
    so only (a, b) is propagated and the value is Re(e^{2 i pi k} a) - (1-beta^2)^{n/2}.
    """
    k = np.asarray(k, dtype=float)
    a = np.ones(k.shape, dtype=complex)
    b = np.zeros(k.shape, dtype=complex)
    if beta != 0.0:
        for x in positions:
            q = beta * np.exp(-2j * x * k)
            a, b = a + q * np.conj(b), b + q * np.conj(a)
    angle = TWO_PI * k
    constant = (1.0 - beta * beta) ** (len(positions) / 2.0)
    return np.cos(angle) * a.real - np.sin(angle) * a.imag - constant


def segment_kernel(k: np.ndarray, beta: float, positions: Sequence[float]) -> np.ndarray:
    """Vectorized normalized segment secular function Im(e^{2 i pi k} A_n), B_n = -conj(A_n)"""
    k = np.asarray(k, dtype=float)
    amplitude = np.ones(k.shape, dtype=complex)
    if beta != 0.0:
        for x in positions:
            q = beta * np.exp(-2j * x * k)
            amplitude = amplitude - q * np.conj(amplitude)
    angle = TWO_PI * k
    return np.sin(angle) * amplitude.real + np.cos(angle) * amplitude.imag


def evaluate_secular(k: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Evaluate the topology's vectorized secular function on an array of wavenumbers"""
    kernel = circle_kernel if config.topology == Topology.CIRCLE else segment_kernel
    return kernel(k, config.beta, config.positions)


def secular_function(config: SystemConfig) -> SecularFunction:
    """Bind a config into a callable k -> zeta(k) for the root finder"""
    beta = config.beta
    positions = tuple(config.positions)
    kernel = circle_kernel if config.topology == Topology.CIRCLE else segment_kernel

    def zeta(k: np.ndarray) -> np.ndarray:
        return kernel(k, beta, positions)

    return zeta
