from pydantic import BaseModel, Field
from typing import Dict, List, Optional


class ReconstructRequest(BaseModel):
    z: List[float] = Field(..., description="Random vector in [-1, 1]^d, blocks in layout order")
    sample_id: int = Field(default=0, ge=0)
    r: Optional[int] = Field(default=None, ge=1, description="Use only the first r selected points")
    include_low_fidelity: bool = False


class FieldPayload(BaseModel):
    x: List[float]
    rho: List[float]
    u1: List[float]
    u2: List[float]
    T: List[float]


class ReconstructResponse(BaseModel):
    sample_id: int
    r: int
    field: FieldPayload
    coefficients: List[float]
    low_residual: float
    physical: bool = Field(default=True, description="False when rho or T of the combination is nonpositive somewhere")
    low_fidelity: Optional[FieldPayload] = None


class SurrogateSummary(BaseModel):
    family: str
    config_hash: str
    artifact_version: str
    layout: Dict[str, int]
    selected_ids: List[int]
    residuals: List[float]
    rank: int
    condition_number: float
    stopped_early: bool
