import logging
from typing import Tuple, Union

import numpy as np

from app.core.exceptions import InvalidState
from app.models.fields import DistributionField, MacroField, MomentVector, join_primitive, split_conserved
from app.models.grid import D_V, PhaseGrid

logger = logging.getLogger(__name__)

ArrayOrField = Union[np.ndarray, DistributionField]

GRAM_RCOND = 1e-12


def _values(f: ArrayOrField) -> np.ndarray:
    if isinstance(f, DistributionField):
        return f.values
    return np.asarray(f, dtype=float)


def velocity_moments(f: ArrayOrField, grid: PhaseGrid) -> MomentVector:
    """Raw averages <f m(v)> over the last two axes, no positivity checks"""
    values = _values(f)
    if values.shape[-2:] != (grid.v_count, grid.v_count):
        raise InvalidState(f"velocity shape {values.shape[-2:]} does not match lattice of {grid.v_count}")
    sums = np.tensordot(values, grid.collision_invariants, axes=([-2, -1], [1, 2]))
    return MomentVector(sums * grid.v_weight)


def moments(f: ArrayOrField, grid: PhaseGrid) -> MacroField:
    """Density, momentum and energy per spatial cell"""
    values = _values(f)
    if values.ndim == 2:
        values = values[None]
    return MacroField(velocity_moments(values, grid).values)


def maxwellian(rho, u, temperature, grid: PhaseGrid) -> np.ndarray:
    """Discrete Maxwellian rho/(2 pi T) exp(-|v-u|^2/(2T)) on every lattice node.

    rho and temperature may be scalars or per-cell arrays; u has a trailing axis of length 2.
    Output shape is rho.shape + (N_v, N_v).
    """
    rho = np.asarray(rho, dtype=float)
    temperature = np.asarray(temperature, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape[-1:] != (D_V,):
        raise InvalidState(f"bulk velocity needs a trailing axis of {D_V}, got {u.shape}")

    bad = np.flatnonzero(~(np.atleast_1d(rho) > 0))
    if bad.size:
        raise InvalidState("maxwellian needs positive density", cell=int(bad[0]))
    bad = np.flatnonzero(~(np.atleast_1d(temperature) > 0))
    if bad.size:
        raise InvalidState("maxwellian needs positive temperature", cell=int(bad[0]))

    rho = rho[..., None, None]
    temperature = temperature[..., None, None]
    du1 = grid.v1 - u[..., 0, None, None]
    du2 = grid.v2 - u[..., 1, None, None]
    return rho / (2.0 * np.pi * temperature) * np.exp(-(du1 ** 2 + du2 ** 2) / (2.0 * temperature))


def maxwellian_of(field: MacroField, grid: PhaseGrid) -> np.ndarray:
    rho, u, temperature = field.primitive()
    return maxwellian(rho, u, temperature, grid)


def conserved_to_primitive(conserved: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return split_conserved(conserved)


def primitive_to_conserved(rho, u, temperature) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return join_primitive(rho, u[..., 0], u[..., 1], temperature)


def resolved_maxwellian(field: MacroField, grid: PhaseGrid) -> np.ndarray:
    """Maxwellian of field with T raised to at least (h/2)^2, h the velocity spacing.

    A nonnegative f with zero bulk velocity has discrete temperature at least (h/2)^2, so colder
    Maxwellians collapse onto a few nodes and make a poor correction weight.
    """
    rho, u, temperature = field.primitive()
    return maxwellian(rho, u, np.maximum(temperature, 0.25 * grid.v_spacing ** 2), grid)


def match_moments(values: np.ndarray, target: np.ndarray, weight: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Add weight * (a + b.v + c|v|^2/2) per cell so that <m result> equals target.

    values and weight are (cells, N_v, N_v), target is (cells, 4). The 4x4 system per cell is the
    weighted Gram matrix of the collision invariants. Cells where it is numerically rank deficient
    get the minimum-norm least-squares correction instead, which matches the target only within
    the span the weight resolves.
    """
    values = np.asarray(values, dtype=float)
    weight = np.asarray(weight, dtype=float)
    invariants = grid.collision_invariants
    defect = np.asarray(target, dtype=float) - velocity_moments(values, grid).values

    gram = np.einsum("cij,aij,bij->cab", weight, invariants, invariants) * grid.v_weight
    singular = np.linalg.svd(gram, compute_uv=False)
    solvable = singular[:, -1] > GRAM_RCOND * singular[:, 0]

    coefficients = np.zeros_like(defect)
    if solvable.any():
        coefficients[solvable] = np.linalg.solve(gram[solvable], defect[solvable][..., None])[..., 0]
    if not solvable.all():
        cells = np.flatnonzero(~solvable)
        logger.warning(f"moment correction is rank deficient in {cells.size} cells (first {cells[0]}), using least squares")
        coefficients[cells] = np.einsum("cab,cb->ca", np.linalg.pinv(gram[cells], rcond=GRAM_RCOND), defect[cells])
    return values + weight * np.einsum("ca,aij->cij", coefficients, invariants)
