from app.models.grid import Boundary, PhaseGrid, D_V
from app.models.fields import DistributionField, MacroField, MomentVector
from app.models.sample import BlockLayout, ParameterSample

__all__ = [
    "Boundary",
    "PhaseGrid",
    "D_V",
    "DistributionField",
    "MacroField",
    "MomentVector",
    "BlockLayout",
    "ParameterSample",
]
