"""
Run configuration and report schemas.
"""

import hashlib
from enum import Enum
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field, field_validator

from ..integrands.library import IntegrandConfig


class Command(Enum):
    """Lab operations a run can dispatch to"""
    RANK_CHECK = "rank-check"
    POTENTIAL = "potential"
    WAVE_CONE = "wave-cone"
    PROJECT = "project"
    DECOMPOSE = "decompose"
    MINIMIZE = "minimize"
    VERIFY_CACCIOPPOLI = "verify-caccioppoli"
    VERIFY_POINCARE = "verify-poincare"
    VERIFY_KORN = "verify-korn"
    EXCESS_SCAN = "excess-scan"
    HARMONIC_APPROX = "harmonic-approx"


class FieldSource(Enum):
    """Where a run gets the field it measures"""
    RANDOM = "random"
    MINIMIZER = "minimizer"
    TWO_PHASE = "two-phase"
    FILE = "file"


class GridConfig(BaseModel):
    dim_n: int = 2
    points: int = 64
    period: float = 1.0


class RunParameters(BaseModel):
    """Numerical parameters; None means the lab default"""
    samples: int = 50
    n_dirs: int = 20
    R: Optional[float] = None
    center: Optional[List[float]] = None
    centers: Optional[List[List[float]]] = None
    theta: float = 0.5
    tau: Optional[float] = None
    alpha: Optional[float] = None
    depth: int = 2
    eps: Optional[float] = None
    q: float = 1.0
    p: float = 2.0
    gamma: float = 1.0
    degree: Optional[int] = None
    mean: Optional[List[float]] = None
    datum: Optional[List[float]] = None
    tol: Optional[float] = None
    max_iter: Optional[int] = None
    init: str = "zero"
    amplitude: float = 1.0
    max_freq: int = 3


class RunConfig(BaseModel):
    """One lab run"""
    id: Optional[str] = None
    command: Command
    operator: Union[str, Dict[str, Any]]
    operator_b: Optional[Union[str, Dict[str, Any]]] = None
    dim_n: Optional[int] = None
    integrand: Optional[IntegrandConfig] = None
    grid: GridConfig = Field(default_factory=GridConfig)
    field: FieldSource = FieldSource.RANDOM
    field_path: Optional[str] = None
    params: RunParameters = Field(default_factory=RunParameters)
    seed: int = 0
    out: Optional[str] = None

    @field_validator("field_path")
    @classmethod
    def _path_given_as_text(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and not value.strip():
            raise ValueError("field_path must not be empty")
        return value

    def run_id(self) -> str:
        return self.id or f"{self.command.value}-{self.config_hash()[:10]}"

    def config_hash(self) -> str:
        """sha256 of the canonical config without output paths"""
        canonical = self.model_dump_json(exclude={"out", "id"})
        return hashlib.sha256(canonical.encode()).hexdigest()


class RunMeta(BaseModel):
    """Run facts excluded from determinism checks"""
    wall_time: float
    timestamp: str
    threads: int


class RunRecord(BaseModel):
    """Report of one run; body is bit-identical for equal (config, seed)"""
    id: str
    command: Command
    config_hash: str
    versions: Dict[str, str]
    passed: bool
    error: Optional[str] = None
    body: Dict[str, Any] = Field(default_factory=dict)
    meta: Optional[RunMeta] = None

    def body_json(self) -> str:
        return self.model_dump_json(exclude={"meta"})


class BatchManifest(BaseModel):
    """A list of runs plus batch options"""
    runs: List[RunConfig]
    parallel: bool = False
    commands: Optional[List[Command]] = None

    def selected(self) -> List[RunConfig]:
        if self.commands is None:
            return list(self.runs)
        return [r for r in self.runs if r.command in self.commands]


class BatchSummary(BaseModel):
    total: int
    passed: int
    failed: int
    records: List[RunRecord]

    @property
    def ok(self) -> bool:
        return self.failed == 0
