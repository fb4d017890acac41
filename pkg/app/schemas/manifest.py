from pydantic import BaseModel, Field, model_validator
from typing import Any, Dict, List, Optional


class FileEntry(BaseModel):
    path: str
    sha256: str
    size: int


class RunManifest(BaseModel):
    command: str
    config_hash: str
    scenario: Dict[str, Any]
    artifact_version: str
    timings: Dict[str, float] = Field(default_factory=dict, description="Wall-clock seconds per phase")
    files: List[FileEntry] = Field(default_factory=list)
    workers: int = 1
    sample_count: int = 0
    notes: List[str] = Field(default_factory=list)


class SurrogateManifest(BaseModel):
    config_hash: str
    scenario: Dict[str, Any]
    artifact_version: str
    layout: Dict[str, int]
    selected_ids: List[int]
    selected_z: List[List[float]]
    residuals: List[float]
    requested_budget: int
    stopped_early: bool
    rank: int
    condition_number: float
    x_spacing: float
    block_weights: List[float]
    timings: Dict[str, float] = Field(default_factory=dict)
    files: List[FileEntry] = Field(default_factory=list)


class QuantityErrors(BaseModel):
    rho: float = Field(..., ge=0)
    u1: float = Field(..., ge=0)
    T: float = Field(..., ge=0)


class ErrorRow(BaseModel):
    r: int
    bifidelity: QuantityErrors
    low_fidelity: QuantityErrors


class ErrorReport(BaseModel):
    rows: List[ErrorRow] = Field(default_factory=list)
    low_fidelity: Optional[QuantityErrors] = None
    speedup: Optional[float] = Field(default=None, description="Mean high-fidelity runtime over mean low-fidelity runtime")
    n_test: int
    with_reference: bool
    epsilon: Optional[float] = None
    n_v_low: Optional[int] = None
    nonphysical_ids: List[int] = Field(
        default_factory=list, description="Test samples whose reconstruction has rho <= 0 or T <= 0 somewhere"
    )

    @model_validator(mode="after")
    def check_rows(self):
        budgets = [row.r for row in self.rows]
        if any(later <= earlier for earlier, later in zip(budgets, budgets[1:])):
            raise ValueError(f"budgets must be strictly increasing, got {budgets}")
        return self


class SweepMarker(BaseModel):
    """Sidecar of a stored low-fidelity sweep; resume only when sweep_key matches"""

    sweep_key: str
    sample_ids: List[int]
