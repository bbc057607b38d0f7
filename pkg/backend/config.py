"""
Run Configuration
RunConfig settings (environment, .env, YAML file, CLI overrides) for all subcommands
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from models.errors import ConfigError, DomainError
from models.schemas import ScanPolicy, SystemConfig, Topology
from services.system_model import build_system

logger = logging.getLogger(__name__)


def _parse_range(text: str) -> List[float]:
    """'start:stop:step' -> inclusive grid"""
    start, stop, step = (float(part) for part in text.split(":"))
    if step <= 0:
        raise ValueError("range step must be positive")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


class RunConfig(BaseSettings):
    """Parameters of one experiment run"""
    model_config = SettingsConfigDict(
        env_prefix="SPECTRA_", env_file=".env", extra="ignore", validate_default=True
    )

    # ============ System ============
    topology: Topology = Topology.CIRCLE
    alpha: List[float] = Field(default=[1.001], description="Single value, list or 'start:stop:step'")
    n: int = Field(default=47, ge=0)
    positions_mode: Literal["primes", "explicit"] = "primes"
    positions: Optional[List[float]] = None

    # ============ Solver ============
    roots: int = Field(default=100_000, ge=1, description="Number of roots N")
    base_step: Optional[float] = Field(default=None, gt=0)
    refine_tolerance: float = Field(default=1e-12, gt=0, le=1e-11)
    tangency_threshold: Optional[float] = Field(default=None, gt=0)
    max_rescans: int = Field(default=3, ge=0)
    window_width: float = Field(default=128.0, gt=0)
    include_ground_state: bool = False
    threads: int = Field(default=1, ge=1)

    # ============ Statistics ============
    drop: int = Field(default=0, ge=0, description="Low-lying levels discarded before unfolding")
    bin_width: Optional[float] = Field(default=None, gt=0)
    lengths: List[float] = Field(default=[0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 10.0])
    goe_table: Optional[str] = None

    # ============ Experiments ============
    sweep_over: Literal["alpha", "n"] = "alpha"
    n_values: List[int] = Field(default_factory=list)
    perturb_levels: int = Field(default=200, ge=1, description="Doublets J compared in perturb-check")
    equidistribution_count: int = Field(default=100_000, ge=10)
    rmt_accuracy: float = Field(default=1e-7, gt=0)
    mc_dim: int = Field(default=200, ge=100)
    mc_samples: int = Field(default=0, ge=0, description="MC oracle sample size for rmt-table; 0 skips it")
    seed: int = Field(default=0, ge=0)
    output: Path = Path("results")

    @field_validator("alpha", mode="before")
    @classmethod
    def _coerce_alpha(cls, value: Any) -> Any:
        if isinstance(value, str):
            if ":" in value:
                return _parse_range(value)
            return [float(part) for part in value.replace(",", " ").split()]
        if isinstance(value, (int, float)):
            return [float(value)]
        return value

    @field_validator("alpha")
    @classmethod
    def _check_alpha(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("alpha list must not be empty")
        for alpha in value:
            if not alpha > 0:
                raise ValueError(f"alpha must be positive, got {alpha}")
        return value

    @field_validator("n_values", mode="before")
    @classmethod
    def _coerce_n_values(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [int(part) for part in value.replace(",", " ").split()]
        if isinstance(value, int):
            return [value]
        return value

    def scan_policy(self) -> ScanPolicy:
        return ScanPolicy(
            base_step=self.base_step,
            refine_tolerance=self.refine_tolerance,
            tangency_threshold=self.tangency_threshold,
            max_rescans=self.max_rescans,
            window_width=self.window_width,
            include_ground_state=self.include_ground_state,
        )

    def system(self, alpha: Optional[float] = None, n: Optional[int] = None) -> SystemConfig:
        """Build the SystemConfig for one (alpha, n) point of this run"""
        alpha = self.alpha[0] if alpha is None else alpha
        try:
            if self.positions_mode == "explicit":
                if self.positions is None:
                    raise ConfigError("positions_mode 'explicit' requires a positions list")
                return build_system(alpha, positions=self.positions, topology=self.topology)
            return build_system(alpha, n=self.n if n is None else n, topology=self.topology)
        except (DomainError, ValidationError) as exc:
            raise ConfigError(f"invalid system: {exc}") from exc

    def validate_systems(self) -> None:
        """Check every configured system before any computation"""
        for alpha in self.alpha:
            self.system(alpha)
        for n in self.n_values:
            self.system(n=n)

    def echo(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def _read_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path) as handle:
            data = yaml.safe_load(handle) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must be a flat key: value mapping")
    unknown = sorted(set(data) - set(RunConfig.model_fields))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}", {"unknown": unknown})
    return data


def load_run_config(
    path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None
) -> RunConfig:
    """
    Merge defaults, environment, config file and CLI overrides (later wins)

    Raises:
        ConfigError: unreadable file, unknown keys or values failing validation
    """
    values: Dict[str, Any] = _read_yaml(path) if path else {}
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})
    try:
        config = RunConfig(**values)
    except ValidationError as exc:
        raise ConfigError(f"invalid run configuration: {exc}", {"errors": str(exc)}) from exc
    config.validate_systems()
    logger.debug(f"Run config: {config.echo()}")
    return config
