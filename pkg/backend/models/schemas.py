"""
Pydantic models for the point-interaction spectral toolkit
"""

import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


APP_VERSION = "1.0.0"

TWO_PI = 2.0 * math.pi


class Topology(str, Enum):
    """Topology of the carrier space"""
    CIRCLE = "circle"
    SEGMENT = "segment"


class Parity(str, Enum):
    """Spacing classes by index parity"""
    ODD = "odd"
    EVEN = "even"
    ALL = "all"


class Ensemble(str, Enum):
    """Reference ensembles for number variance"""
    GOE = "GOE"
    GUE = "GUE"
    POISSON = "Poisson"


class ArrayModel(BaseModel):
    """Base for models that carry numpy arrays"""
    model_config = ConfigDict(arbitrary_types_allowed=True)


# ============ System Models ============

class SystemConfig(BaseModel):
    """A particle on a circle (or segment) with n scale-free point interactions"""
    model_config = ConfigDict(frozen=True)

    topology: Topology = Field(default=Topology.CIRCLE)
    alpha: float = Field(..., gt=0, description="Dimensionless coupling, alpha=1 is the free particle")
    positions: Tuple[float, ...] = Field(
        default=(), description="Interaction positions, strictly increasing in (0, 2*pi)"
    )

    @field_validator("positions")
    @classmethod
    def _check_positions(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        for x in value:
            if not (0.0 < x < TWO_PI) or not math.isfinite(x):
                raise ValueError(f"position {x} outside the open interval (0, 2*pi)")
        for left, right in zip(value, value[1:]):
            if not left < right:
                raise ValueError("positions must be strictly increasing")
        return value

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def beta(self) -> float:
        return (1.0 - self.alpha ** 2) / (1.0 + self.alpha ** 2)

    @property
    def is_free(self) -> bool:
        return self.alpha == 1.0 or self.n == 0


class SecularValue(BaseModel):
    """Normalized secular function value with the discarded imaginary part"""
    value: float
    residual_imag: float = Field(..., ge=0)


class ScanPolicy(BaseModel):
    """Grid scan and refinement settings of the root finder"""
    base_step: Optional[float] = Field(
        default=None, gt=0, description="Grid step in k; None means min(0.01, 1/(8(n+1)))"
    )
    refine_tolerance: float = Field(default=1e-12, gt=0, le=1e-11)
    tangency_threshold: Optional[float] = Field(
        default=None, gt=0, description="|zeta| level triggering double-root probing; None means automatic"
    )
    double_root_tolerance: float = Field(default=1e-12, gt=0)
    max_rescans: int = Field(default=3, ge=0)
    window_width: float = Field(default=128.0, gt=0, description="Width in k of one parallel scan window")
    weyl_slack: int = Field(default=4, ge=0, description="Count check bound is n + weyl_slack")
    include_ground_state: bool = Field(default=False)
    interpolate_final: bool = Field(default=True, description="Secant step after bisection")

    def step_for(self, n: int) -> float:
        if self.base_step is not None:
            return self.base_step
        return min(0.01, 1.0 / (8.0 * (n + 1)))

    def threshold_for(self, beta: float, n: int, step: float) -> float:
        if self.tangency_threshold is not None:
            return self.tangency_threshold
        return max(1e-6, beta ** 2 * n) + 2.0 * math.pi ** 2 * step ** 2


# ============ Spectrum Models ============

class CountCheckReport(BaseModel):
    """Weyl counting check |N(K) - 2K| <= bound for integer K"""
    bound: int
    k_checked: int = Field(..., description="Largest integer K checked")
    max_deviation: int
    worst_k: Optional[int] = None
    passed: bool
    unresolved_windows: List[Tuple[float, float]] = Field(default_factory=list)


class ScanDiagnostics(BaseModel):
    """Solver diagnostics attached to a spectrum"""
    base_step: float
    tangency_threshold: float
    k_max: float
    window_count: int
    rescans: int = 0
    tangency_probes: int = 0
    double_roots: int = 0
    max_residual: float = 0.0
    ground_state: Optional[float] = Field(None, description="Dropped ground-state root, if any")
    count_check: CountCheckReport


class Spectrum(ArrayModel):
    """Sorted positive roots of a secular function"""
    config: SystemConfig
    roots: np.ndarray = Field(..., description="Ascending roots, repeated per multiplicity")
    distinct_roots: np.ndarray
    multiplicities: np.ndarray
    residuals: np.ndarray = Field(..., description="|zeta(k)| per distinct root")
    diagnostics: ScanDiagnostics

    @property
    def count(self) -> int:
        return int(self.roots.size)

    @property
    def energies(self) -> np.ndarray:
        return self.roots ** 2


# ============ Perturbation Models ============

class DoubletPrediction(BaseModel):
    """First-order splitting of the free doublet at k=j"""
    j: int = Field(..., ge=1)
    lambda_minus: float
    lambda_plus: float = Field(..., ge=0)
    k_lower: float
    k_upper: float
    predicted_odd_spacing: float
    predicted_even_spacing: Optional[float] = Field(None, description="Spacing to the next doublet")

    @model_validator(mode="after")
    def _check_order(self) -> "DoubletPrediction":
        if self.k_lower > self.k_upper:
            raise ValueError("k_lower must not exceed k_upper")
        return self


class SegmentPrediction(BaseModel):
    """First-order shift of the free segment level k=j/2"""
    j: int = Field(..., ge=1)
    gamma: float
    k_pred: float


# ============ Statistics Models ============

class SpacingSeries(ArrayModel):
    """Unfolded levels and their nearest-neighbour spacings"""
    levels: np.ndarray
    spacings: np.ndarray

    @property
    def odd(self) -> np.ndarray:
        # s_1, s_3, ... with s_1 = e_2 - e_1
        return self.spacings[0::2]

    @property
    def even(self) -> np.ndarray:
        return self.spacings[1::2]


class EmpiricalCDF(ArrayModel):
    """Step function F(s) = (1/N) sum Theta(s - s_i)"""
    sample: np.ndarray = Field(..., description="Sorted sample")

    @property
    def size(self) -> int:
        return int(self.sample.size)

    def __call__(self, s: Any) -> np.ndarray:
        return np.searchsorted(self.sample, s, side="right") / self.sample.size


class Histogram(BaseModel):
    """Density-normalized histogram"""
    edges: List[float]
    densities: List[float]


class ComparisonReport(BaseModel):
    """Distances of one spacing sample to the reference distributions"""
    parity: Parity
    n_samples: int
    mean_spacing: float = Field(..., description="Empirical mean before rescaling to unit mean")
    delta_F_W: float = Field(..., ge=0)
    delta_F_GOE: float = Field(..., ge=0)
    delta_F_poisson: float = Field(..., ge=0)
    ks_W: float = Field(..., ge=0)
    ks_GOE: float = Field(..., ge=0)
    ks_poisson: float = Field(..., ge=0)
    small_s_exponent: Optional[float] = None
    histogram: Optional[Histogram] = None


class NumberVarianceCurve(BaseModel):
    """Sigma^2(L) with the number of windows used per L"""
    lengths: List[float]
    variance: List[float]
    windows: List[int]


# ============ Reference Models ============

class GOETableMetadata(BaseModel):
    """Provenance of a tabulated GOE spacing CDF"""
    method: str = "sine-kernel Fredholm determinant (even part), Gauss-Legendre Nystrom"
    grid_step: float
    s_max: float
    quadrature_order: int
    accuracy_estimate: float
    delta_goe_wigner: float
    unit_mean_error: float
    number_variance_form: str = "exact sine-kernel"
    generator_version: str


class GOETable(ArrayModel):
    """Tabulated F_GOE on a uniform grid"""
    s: np.ndarray
    cdf: np.ndarray
    metadata: GOETableMetadata


# ============ Run Result Models ============

class SweepRow(BaseModel):
    """One sweep point"""
    alpha: float
    n: int
    root_count: int = 0
    delta_F_W: Optional[float] = None
    delta_F_GOE: Optional[float] = None
    ks_W: Optional[float] = None
    ks_GOE: Optional[float] = None
    status: str = "ok"
    error: Optional[str] = None


class PerturbationCheck(BaseModel):
    """Exact versus first-order roots"""
    topology: Topology
    beta: float
    levels_compared: int
    max_error: float
    error_bound: float = Field(..., description="40 * beta^2, the calibrated second-order bound")
    within_bound: bool
    equidistribution: Dict[str, float] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)


class SelfTestCheck(BaseModel):
    """One self-test assertion"""
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


class RunSummary(BaseModel):
    """Machine-readable summary written by every subcommand"""
    command: str
    version: str
    config: Dict[str, Any]
    root_count: Optional[int] = None
    count_check: Optional[CountCheckReport] = None
    comparisons: Dict[str, ComparisonReport] = Field(default_factory=dict)
    small_s_exponents: Dict[str, Optional[float]] = Field(default_factory=dict)
    number_variance: Optional[NumberVarianceCurve] = None
    sweep: List[SweepRow] = Field(default_factory=list)
    perturbation: Optional[PerturbationCheck] = None
    goe_table: Optional[GOETableMetadata] = None
    selftest: List[SelfTestCheck] = Field(default_factory=list)
    metrics: Dict[str, float] = Field(default_factory=dict, description="Auxiliary scalar results")
    timings: Dict[str, float] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)


class ErrorResponse(BaseModel):
    """Error report printed by the CLI"""
    success: bool = False
    error: str
    error_code: str
    details: Optional[Dict[str, Any]] = None
