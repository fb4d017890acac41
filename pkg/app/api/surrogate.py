import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
from fastapi import APIRouter, HTTPException

from app.core.exceptions import ArtifactError, KineticUQError
from app.models.fields import MacroField
from app.models.sample import ParameterSample
from app.schemas.manifest import SurrogateManifest
from app.schemas.scenario import ScenarioConfig
from app.schemas.surrogate import FieldPayload, ReconstructRequest, ReconstructResponse, SurrogateSummary
from app.services.bifidelity import BiFidelitySurrogate
from app.services.fluid_solver import run_low_fidelity
from app.services.scenarios import layout_for
from app.services.storage import field_frame, load_surrogate

logger = logging.getLogger(__name__)

router = APIRouter()


class SurrogateStore:
    """The surrogate served by this process"""

    def __init__(self):
        self.surrogate: Optional[BiFidelitySurrogate] = None
        self.manifest: Optional[SurrogateManifest] = None
        self.scenario: Optional[ScenarioConfig] = None

    def load(self, directory: Union[str, Path]):
        self.surrogate, self.manifest, self.scenario = load_surrogate(directory)
        logger.info(f"Serving surrogate from {directory} (N={self.surrogate.selection.size})")

    def clear(self):
        self.surrogate = self.manifest = self.scenario = None

    def require(self):
        if self.surrogate is None:
            raise HTTPException(status_code=404, detail="No surrogate loaded")
        return self.surrogate, self.manifest, self.scenario


store = SurrogateStore()


def _payload(x: np.ndarray, macro: Union[MacroField, np.ndarray]) -> FieldPayload:
    frame = field_frame(x, macro)
    return FieldPayload(**{column: frame[column].tolist() for column in frame.columns})


@router.get("/manifest", response_model=SurrogateSummary)
async def get_manifest():
    """Selection and conditioning summary of the loaded surrogate"""
    surrogate, manifest, scenario = store.require()
    return SurrogateSummary(
        family=scenario.family.value,
        config_hash=manifest.config_hash,
        artifact_version=manifest.artifact_version,
        layout=manifest.layout,
        selected_ids=manifest.selected_ids,
        residuals=manifest.residuals,
        rank=surrogate.rank,
        condition_number=surrogate.condition_number,
        stopped_early=manifest.stopped_early,
    )


@router.post("/reconstruct", response_model=ReconstructResponse)
def reconstruct_sample(request: ReconstructRequest):
    """One low-fidelity run at z combined with the stored high-fidelity snapshots"""
    surrogate, _, scenario = store.require()
    try:
        if request.r is not None and request.r != surrogate.selection.size:
            surrogate = surrogate.prefix(request.r)
        sample = ParameterSample(
            sample_id=request.sample_id,
            z=np.asarray(request.z, dtype=float),
            layout=layout_for(scenario.family, scenario.d1),
            stream="online",
        )
        low_field = run_low_fidelity(sample, scenario)
        result = surrogate.reconstruct_from_low(low_field)
        if not result.physical:
            logger.warning(f"Reconstruction of sample {request.sample_id} has rho <= 0 or T <= 0 somewhere")
    except ArtifactError as e:
        raise HTTPException(status_code=500, detail=str(e))
    except KineticUQError as e:
        raise HTTPException(status_code=422, detail=str(e))

    x = scenario.high_grid().x_centers
    return ReconstructResponse(
        sample_id=request.sample_id,
        r=surrogate.selection.size,
        field=_payload(x, result.values),
        coefficients=result.coefficients.tolist(),
        low_residual=result.low_residual,
        physical=result.physical,
        low_fidelity=_payload(x, low_field) if request.include_low_fidelity else None,
    )
