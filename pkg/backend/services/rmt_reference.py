"""
RMT Reference Service
Wigner surmise, exact GOE (Gaudin-Mehta) and Poisson spacing laws, number-variance
curves and a Monte-Carlo GOE oracle
"""

import logging
import math
import os
import time
from abc import ABC, abstractmethod
from functools import lru_cache
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import integrate, optimize, special
from scipy.interpolate import PchipInterpolator

from models.errors import DomainError, GenerationError
from models.schemas import APP_VERSION, Ensemble, GOETable, GOETableMetadata
from services.io import read_goe_table

logger = logging.getLogger(__name__)

DEFAULT_TABLE_PATH = Path(__file__).resolve().parent.parent / "data" / "goe_table.txt"

# exact sine-kernel value; the small-s series plus large-s asymptotic route gives 3.9280e-5
GOE_WIGNER_DELTA = 3.8182e-5
SERIES_GOE_WIGNER_DELTA = 3.9280e-5
DELTA_TOLERANCE = 1e-6
UNIT_MEAN_TOLERANCE = 1e-5

TABLE_S_MAX = 6.0
TABLE_STEP = 0.005
QUADRATURE_ORDER = 40
MAX_QUADRATURE_ORDER = 160


def _as_nonnegative(s) -> np.ndarray:
    values = np.asarray(s, dtype=float)
    if np.any(values < 0):
        raise DomainError("spacing must be non-negative", {"min": float(np.min(values))})
    return values


def _scalar_or_array(values: np.ndarray, like):
    return float(values) if np.ndim(like) == 0 else values


# ============ Reference Distributions ============

class ReferenceDistribution(ABC):
    """Unit-mean spacing law on [0, inf)"""

    name: str = ""

    @abstractmethod
    def pdf(self, s):
        ...

    @abstractmethod
    def cdf(self, s):
        ...

    def ppf(self, q: float) -> float:
        upper = 1.0
        while self.cdf(upper) < q:
            upper *= 2.0
        return float(optimize.brentq(lambda s: self.cdf(s) - q, 0.0, upper, xtol=1e-14))

    def mean(self) -> float:
        upper = self.ppf(1.0 - 1e-12)
        value, _ = integrate.quad(lambda s: 1.0 - self.cdf(s), 0.0, upper, limit=200)
        return value

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name})"


class WignerSurmise(ReferenceDistribution):
    """P_W(s) = (pi/2) s exp(-pi s^2/4)"""

    name = "Wigner"

    def pdf(self, s):
        values = _as_nonnegative(s)
        return _scalar_or_array(0.5 * math.pi * values * np.exp(-0.25 * math.pi * values ** 2), s)

    def cdf(self, s):
        values = _as_nonnegative(s)
        return _scalar_or_array(-np.expm1(-0.25 * math.pi * values ** 2), s)

    def ppf(self, q: float) -> float:
        return math.sqrt(-4.0 * math.log1p(-q) / math.pi)

    def mean(self) -> float:
        return 1.0


class PoissonSpacing(ReferenceDistribution):
    """P(s) = exp(-s)"""

    name = "Poisson"

    def pdf(self, s):
        values = _as_nonnegative(s)
        return _scalar_or_array(np.exp(-values), s)

    def cdf(self, s):
        values = _as_nonnegative(s)
        return _scalar_or_array(-np.expm1(-values), s)

    def ppf(self, q: float) -> float:
        return -math.log1p(-q)

    def mean(self) -> float:
        return 1.0


class GOESpacing(ReferenceDistribution):
    """Exact GOE spacing law interpolated from a table with a monotone cubic"""

    name = "GOE_exact"

    def __init__(self, table: GOETable):
        self.table = table
        self.s_max = float(table.s[-1])
        self._spline = PchipInterpolator(table.s, table.cdf, extrapolate=False)
        self._density = self._spline.derivative()

    def cdf(self, s):
        values = _as_nonnegative(s)
        result = np.where(values > self.s_max, 1.0, self._spline(np.minimum(values, self.s_max)))
        return _scalar_or_array(result, s)

    def pdf(self, s):
        values = _as_nonnegative(s)
        result = np.where(values > self.s_max, 0.0, self._density(np.minimum(values, self.s_max)))
        return _scalar_or_array(result, s)

    def mean(self) -> float:
        return float(integrate.simpson(1.0 - self.table.cdf, x=self.table.s))


_WIGNER = WignerSurmise()
_POISSON = PoissonSpacing()


def wigner_reference() -> WignerSurmise:
    return _WIGNER


def poisson_reference() -> PoissonSpacing:
    return _POISSON


def wigner_pdf(s):
    return _WIGNER.pdf(s)


def wigner_cdf(s):
    return _WIGNER.cdf(s)


def poisson_cdf(s):
    return _POISSON.cdf(s)


def reference_delta(first: ReferenceDistribution, second: ReferenceDistribution, upper: float = 10.0) -> float:
    """Integral over [0, upper] of (F_1 - F_2)^2"""
    value, _ = integrate.quad(
        lambda s: (first.cdf(s) - second.cdf(s)) ** 2, 0.0, upper, limit=400, epsabs=1e-13
    )
    return value


# ============ GOE Table Generation ============

def _gap_probability(t: np.ndarray, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    E(t) = det(I - K+) on L^2(0, t) and dE/dt, K+(x, y) = sinc(x - y) + sinc(x + y)

    Nystrom discretization on Gauss-Legendre nodes scaled to (0, t); the derivative
    follows from d/dt log det(I - A) = -tr((I - A)^{-1} dA/dt).
    """
    u, w = np.polynomial.legendre.leggauss(order)
    u = 0.5 * (u + 1.0)
    w = 0.5 * w
    root_w = np.sqrt(np.outer(w, w))
    diff = u[:, None] - u[None, :]
    total = u[:, None] + u[None, :]

    tt = t[:, None, None]
    kernel = tt * (np.sinc(tt * diff) + np.sinc(tt * total))
    dkernel = np.cos(math.pi * tt * diff) + np.cos(math.pi * tt * total)
    a = root_w * kernel
    da = root_w * dkernel

    resolvent = np.eye(order)[None, :, :] - a
    gap = np.linalg.det(resolvent)
    trace = np.trace(np.linalg.solve(resolvent, da), axis1=1, axis2=2)
    return gap, -gap * trace


def _goe_cdf_grid(s: np.ndarray, order: int, chunk: int = 128) -> np.ndarray:
    # F(s) = 1 + dE/ds with t = s/2
    dgap = np.concatenate(
        [_gap_probability(0.5 * s[i : i + chunk], order)[1] for i in range(0, s.size, chunk)]
    )
    cdf = 1.0 + 0.5 * dgap
    cdf[0] = 0.0
    return np.clip(np.maximum.accumulate(cdf), 0.0, 1.0)


def generate_goe_table(
    accuracy: float = 1e-7,
    s_max: float = TABLE_S_MAX,
    step: float = TABLE_STEP,
    order: int = QUADRATURE_ORDER,
) -> GOETable:
    """
    Tabulate F_GOE from the Fredholm determinant of the even sine kernel

    The spacing law is F(s) = 1 + dE/ds with E(s) = det(I - K+) on (0, s/2).
    The table is recomputed at doubled quadrature order as an accuracy estimate,
    and the order is doubled until that estimate meets the requested accuracy.

    Raises:
        GenerationError: the GOE-Wigner constant or the unit mean self-check fails
    """
    started = time.time()
    s = step * np.arange(int(round(s_max / step)) + 1)
    cdf = _goe_cdf_grid(s, order)
    while True:
        refined = _goe_cdf_grid(s, 2 * order)
        estimate = float(np.max(np.abs(refined - cdf)))
        if estimate <= accuracy or order >= MAX_QUADRATURE_ORDER:
            break
        order, cdf = 2 * order, refined

    delta = float(integrate.simpson((cdf - wigner_cdf(s)) ** 2, x=s))
    unit_mean_error = abs(float(integrate.simpson(1.0 - cdf, x=s)) - 1.0)
    logger.info(
        f"GOE table: {s.size} points, order {order}, accuracy {estimate:.1e}, "
        f"delta(F_GOE-F_W)={delta:.5e}, unit mean error {unit_mean_error:.1e} "
        f"({time.time() - started:.2f}s)"
    )

    metadata = GOETableMetadata(
        grid_step=step,
        s_max=float(s[-1]),
        quadrature_order=order,
        accuracy_estimate=estimate,
        delta_goe_wigner=delta,
        unit_mean_error=unit_mean_error,
        generator_version=APP_VERSION,
    )
    if abs(delta - GOE_WIGNER_DELTA) > DELTA_TOLERANCE:
        raise GenerationError(
            f"delta(F_GOE-F_W)={delta:.6e} differs from {GOE_WIGNER_DELTA:.4e} by more than {DELTA_TOLERANCE:g}",
            {"metadata": metadata.model_dump()},
        )
    if unit_mean_error > UNIT_MEAN_TOLERANCE:
        raise GenerationError(
            f"GOE table mean deviates from 1 by {unit_mean_error:.2e}",
            {"metadata": metadata.model_dump()},
        )
    return GOETable(s=s, cdf=cdf, metadata=metadata)


@lru_cache(maxsize=4)
def load_goe_table(path: Optional[str] = None) -> GOETable:
    """Read the GOE table file, generating it in-process when the file is absent"""
    table_path = Path(path or os.getenv("SPECTRA_GOE_TABLE") or DEFAULT_TABLE_PATH)
    if table_path.exists():
        return read_goe_table(table_path)
    logger.warning(f"GOE table {table_path} not found; generating it in-process")
    return generate_goe_table()


@lru_cache(maxsize=4)
def goe_reference(path: Optional[str] = None) -> GOESpacing:
    return GOESpacing(load_goe_table(path))


def goe_cdf(s):
    return goe_reference().cdf(s)


def goe_pdf(s):
    return goe_reference().pdf(s)


# ============ Number Variance ============

def number_variance_reference(ensemble: Ensemble, length):
    """
    Sine-kernel number variance Sigma^2(L) of GOE and GUE; Poisson gives L

    Args:
        ensemble: GOE, GUE or Poisson
        length: Window length(s), positive
    """
    lengths = np.asarray(length, dtype=float)
    if np.any(lengths <= 0):
        raise DomainError("number variance needs L > 0")
    if ensemble == Ensemble.POISSON:
        return _scalar_or_array(lengths.copy(), length)

    x = 2.0 * math.pi * lengths
    si, ci = special.sici(x)
    gue = (np.log(x) + np.euler_gamma + 1.0 - np.cos(x) - ci) / math.pi ** 2 + lengths * (
        1.0 - 2.0 * si / math.pi
    )
    if ensemble == Ensemble.GUE:
        return _scalar_or_array(gue, length)

    half_si, _ = special.sici(math.pi * lengths)
    goe = 2.0 * gue + (half_si / math.pi) ** 2 - half_si / math.pi
    return _scalar_or_array(goe, length)


# ============ Monte-Carlo Oracle ============

MC_BATCHES = 16
CENTRAL_FRACTION = 0.25
UNFOLD_FRACTION = 0.10


def _unfolded_central_spacings(eigenvalues: np.ndarray) -> np.ndarray:
    """Central-quarter spacings divided by the local mean spacing over a 10% window"""
    dim = eigenvalues.size
    lo = int(round(dim * (0.5 - 0.5 * CENTRAL_FRACTION)))
    hi = int(round(dim * (0.5 + 0.5 * CENTRAL_FRACTION)))
    half = max(1, int(round(0.5 * UNFOLD_FRACTION * dim)))
    index = np.arange(lo, hi)
    local = (eigenvalues[index + half] - eigenvalues[index - half]) / (2 * half)
    return (eigenvalues[index + 1] - eigenvalues[index]) / local


def _goe_batch(dim: int, matrices: int, seed: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.default_rng(seed)
    parts = []
    for _ in range(matrices):
        a = rng.standard_normal((dim, dim))
        # off-diagonal variance 1, diagonal variance 2
        h = (a + a.T) / math.sqrt(2.0)
        parts.append(_unfolded_central_spacings(np.linalg.eigvalsh(h)))
    return np.concatenate(parts) if parts else np.empty(0)


def goe_mc_oracle(dim: int, count: int, seed: int = 0, threads: int = 1) -> np.ndarray:
    """
    Pooled unfolded spacings of sampled GOE matrices

    Matrices are split into a fixed number of batches, each with its own
    SeedSequence stream, so the sample depends only on (dim, count, seed).
    """
    if dim < 100:
        raise DomainError(f"matrix dimension must be >= 100, got {dim}")
    if count < 1:
        raise DomainError(f"sample count must be positive, got {count}")

    per_matrix = _unfolded_central_spacings(np.arange(dim, dtype=float)).size
    matrices = int(math.ceil(count / per_matrix))
    batch_sizes = [len(chunk) for chunk in np.array_split(np.arange(matrices), MC_BATCHES)]
    streams = np.random.SeedSequence(seed).spawn(MC_BATCHES)
    logger.info(f"GOE Monte-Carlo: {matrices} matrices of dim {dim} for {count} spacings")

    parts = Parallel(n_jobs=max(1, threads), prefer="threads")(
        delayed(_goe_batch)(dim, size, stream) for size, stream in zip(batch_sizes, streams)
    )
    return np.concatenate(parts)[:count]
