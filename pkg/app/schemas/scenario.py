import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, Field, ValidationError, model_validator

from app.core.exceptions import ConfigError
from app.models.grid import Boundary, PhaseGrid


class Family(str, Enum):
    DOUBLE_PEAK = "double_peak"
    SOD = "sod"
    MIXED_REGIME = "mixed_regime"


class EpsilonKind(str, Enum):
    CONSTANT = "constant"
    MIXED = "mixed"


DEFAULT_T_FINAL = {Family.DOUBLE_PEAK: 0.1, Family.SOD: 0.15, Family.MIXED_REGIME: 0.1}

# (N_v high, N_v low) of the published runs
FULL_SCALE_LATTICES = {Family.DOUBLE_PEAK: (16, 8), Family.SOD: (24, 12), Family.MIXED_REGIME: (16, 8)}


class GridConfig(BaseModel):
    n_x: int = Field(default=50, ge=2, description="Spatial cells on [0, 1]")
    n_v_high: int = Field(default=16, ge=4, description="Velocity nodes per dimension, kinetic model")
    n_v_low: int = Field(default=8, ge=4, description="Velocity nodes per dimension, fluid model")
    v_extent: float = Field(default=8.4, gt=0)
    n_sigma: int = Field(default=64, ge=8, description="Angles used to precompute the spectral weights")


class EpsilonConfig(BaseModel):
    kind: EpsilonKind = EpsilonKind.CONSTANT
    value: float = Field(default=1e-4, gt=0, description="Knudsen number of constant profiles")


class ScenarioConfig(BaseModel):
    family: Family
    d1: int = Field(default=7, ge=1, le=7)
    grid: GridConfig = Field(default_factory=GridConfig)
    dt: Optional[float] = Field(default=None, gt=0, description="Time step; derived from cfl when absent")
    cfl: float = Field(default=0.672, gt=0, lt=1)
    t_final: Optional[float] = Field(default=None, gt=0)
    epsilon: EpsilonConfig = Field(default_factory=EpsilonConfig)
    boundary: Optional[Boundary] = None
    n_train: int = Field(default=200, ge=1, description="Training set size M")
    n_test: int = Field(default=100, ge=1, description="Test set size n")
    seed: int = Field(default=0, ge=0, lt=2 ** 63)
    budget: int = Field(default=30, ge=1)
    block_scaling: bool = False
    beta_cap: Optional[float] = Field(default=2.0, gt=0)
    well_balanced: bool = True
    with_reference: bool = False
    full_scale: bool = False

    @model_validator(mode="after")
    def check_consistency(self):
        if self.family == Family.MIXED_REGIME and self.epsilon.kind != EpsilonKind.MIXED:
            self.epsilon = EpsilonConfig(kind=EpsilonKind.MIXED, value=self.epsilon.value)
        if self.budget > self.n_train:
            raise ValueError(f"budget {self.budget} exceeds training size {self.n_train}")
        cfl_number = self.time_step * self.grid.v_extent * self.grid.n_x
        if cfl_number >= 1.0:
            raise ValueError(f"dt * L_v / dx = {cfl_number:.4f} violates the CFL guard")
        return self

    @property
    def time_step(self) -> float:
        if self.dt is not None:
            return self.dt
        return self.cfl / (self.grid.n_x * self.grid.v_extent)

    @property
    def final_time(self) -> float:
        return self.t_final if self.t_final is not None else DEFAULT_T_FINAL[self.family]

    @property
    def resolved_boundary(self) -> Boundary:
        if self.boundary is not None:
            return self.boundary
        return Boundary.ZERO_GRADIENT if self.family == Family.SOD else Boundary.PERIODIC

    def high_grid(self) -> PhaseGrid:
        return PhaseGrid(self.grid.n_x, self.grid.n_v_high, self.grid.v_extent, self.resolved_boundary)

    def low_grid(self) -> PhaseGrid:
        return PhaseGrid(self.grid.n_x, self.grid.n_v_low, self.grid.v_extent, self.resolved_boundary)

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def with_epsilon(self, value: float) -> "ScenarioConfig":
        return self.model_copy(update={"epsilon": EpsilonConfig(kind=self.epsilon.kind, value=value)})

    def with_low_lattice(self, n_v_low: int) -> "ScenarioConfig":
        return self.model_copy(update={"grid": self.grid.model_copy(update={"n_v_low": n_v_low})})

    def at_full_scale(self) -> "ScenarioConfig":
        """Published resolutions: N_x = 100, dt = 8e-4, M = n = 1000"""
        n_v_high, n_v_low = FULL_SCALE_LATTICES[self.family]
        grid = self.grid.model_copy(update={"n_x": 100, "n_v_high": n_v_high, "n_v_low": n_v_low})
        return self.model_copy(
            update={"grid": grid, "dt": 8e-4, "n_train": 1000, "n_test": 1000, "full_scale": True}
        )

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ScenarioConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read scenario config {path}: {e}") from e
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        try:
            return cls.model_validate(raw)
        except ValidationError as e:
            raise ConfigError(f"invalid scenario config: {e}") from e
