"""
Lab configuration.
Defaults live in config/lab_config.yaml; environment variables override the file.
"""

import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError

from .errors import ConfigError
from .system import default_threads, recommended_grid_budget

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parents[3] / "config" / "lab_config.yaml"


class SymbolSettings(BaseModel):
    rank_cutoff: float = 1e-9
    ambiguous_band: float = 1e-6
    low_discrepancy_per_dim: int = 200
    default_samples: int = 50
    identity_tol: float = 1e-12


class FieldSettings(BaseModel):
    min_points_per_axis: int = 8
    max_grid_points: Optional[int] = None
    projection_tol: float = 1e-10
    afree_tol: float = 1e-8
    min_ball_cells: float = 4.0
    spectral_floor: float = 1e-16


class IntegrandSettings(BaseModel):
    shift_bound: float = 10.0
    fd_step: float = 1e-5
    derivative_tol: float = 1e-6
    cauchy_tol: float = 1e-4
    degenerate_tol: float = 1e-12
    probe_amplitudes: tuple[float, ...] = (0.1, 1.0, 10.0)


class SolverSettings(BaseModel):
    tol: float = 1e-8
    max_iter: int = 20000
    initial_step: float = 1.0
    shrink: float = 0.5
    slope: float = 1e-4
    max_backtracks: int = 60
    divergence_window: int = 10
    descent_slack: float = 1e-12


class HarmonicSettings(BaseModel):
    cg_tol: float = 1e-12
    cg_max_iter: int = 500
    k_bound: float = 10.0
    bank_directions: int = 10
    bank_seed: int = 1234
    polynomial_degree: int = 3
    hypothesis_tol: float = 1e-8


class RegularitySettings(BaseModel):
    alpha: float = 0.3
    tau: float = 0.05
    eps_excess: float = 1.0
    min_excess_cells: float = 8.0
    kernel_degree_offset: int = 2
    ratio_cap: float = 1e3
    extremal_tol: float = 1e-4
    image_tol: float = 1e-8


class LabSettings(BaseModel):
    """Complete lab configuration"""
    symbols: SymbolSettings = Field(default_factory=SymbolSettings)
    spectral: FieldSettings = Field(default_factory=FieldSettings)
    integrands: IntegrandSettings = Field(default_factory=IntegrandSettings)
    solver: SolverSettings = Field(default_factory=SolverSettings)
    harmonic: HarmonicSettings = Field(default_factory=HarmonicSettings)
    regularity: RegularitySettings = Field(default_factory=RegularitySettings)
    threads: int = Field(default_factory=default_threads)
    log_level: str = "INFO"
    seed: int = 0

    def grid_budget(self) -> int:
        """Maximum grid points allowed for a single field"""
        if self.spectral.max_grid_points is not None:
            return self.spectral.max_grid_points
        return recommended_grid_budget()


def _apply_env_overrides(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Environment variables take precedence over the config file"""
    threads = os.environ.get("CONSTRANK_THREADS")
    if threads:
        try:
            raw["threads"] = int(threads)
        except ValueError:
            raise ConfigError(f"CONSTRANK_THREADS must be an integer, got {threads!r}")

    log_level = os.environ.get("CONSTRANK_LOG_LEVEL")
    if log_level:
        raw["log_level"] = log_level.upper()
    return raw


def load_config(path: Optional[Path] = None) -> LabSettings:
    """
    Load lab settings from a YAML file.

    Args:
        path: Config file; falls back to CONSTRANK_CONFIG, then config/lab_config.yaml

    Returns:
        LabSettings with environment overrides applied
    """
    if path is None:
        env_path = os.environ.get("CONSTRANK_CONFIG")
        path = Path(env_path) if env_path else DEFAULT_CONFIG_PATH

    raw: Dict[str, Any] = {}
    path = Path(path)
    if path.exists():
        try:
            with open(path) as f:
                raw = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Cannot parse {path}: {e}")
        logger.debug(f"Loaded lab config from {path}")
    else:
        logger.debug(f"No lab config at {path}, using defaults")

    try:
        return LabSettings.model_validate(_apply_env_overrides(raw))
    except ValidationError as e:
        raise ConfigError(f"Invalid lab config {path}: {e}")


@lru_cache(maxsize=1)
def get_settings() -> LabSettings:
    """Process-wide settings, loaded once"""
    return load_config()
