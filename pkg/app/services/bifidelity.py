import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from app.core.exceptions import BudgetExceedsRank, IdMismatch, InvalidState, KineticUQError
from app.models.fields import MacroField
from app.models.sample import ParameterSample

logger = logging.getLogger(__name__)

SNAPSHOT_BLOCKS = ("rho", "u1", "T")
GREEDY_TOLERANCE = 1e-12
GRAMIAN_TRUNCATION = 1e-12


class Fidelity(str, Enum):
    LOW = "low"
    HIGH = "high"


@dataclass(frozen=True)
class Snapshot:
    """Concatenated [rho; u1; T] over the spatial cells"""

    sample_id: int
    values: np.ndarray
    fidelity: Fidelity

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0 or values.size % len(SNAPSHOT_BLOCKS):
            raise InvalidState(f"snapshot {self.sample_id} must be a flat vector of 3 * N_x entries, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidState(f"snapshot {self.sample_id} is not finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "fidelity", Fidelity(self.fidelity))

    @classmethod
    def from_field(cls, sample_id: int, macro: MacroField, fidelity: Fidelity) -> "Snapshot":
        return cls(sample_id, macro.snapshot(), fidelity)

    @property
    def x_count(self) -> int:
        return self.values.size // len(SNAPSHOT_BLOCKS)

    def to_field(self) -> MacroField:
        return MacroField.from_snapshot(self.values)


def _metric(matrix: np.ndarray, x_spacing: float, block_weights: np.ndarray) -> np.ndarray:
    """Rows scaled so that the Euclidean product is <a, b> = dx sum_i w_i^2 a_i b_i"""
    x_count = matrix.shape[0] // len(SNAPSHOT_BLOCKS)
    scale = np.sqrt(x_spacing) * np.repeat(block_weights, x_count)
    return matrix * (scale[:, None] if matrix.ndim == 2 else scale)


def _stack(snapshots: Sequence[Snapshot]) -> np.ndarray:
    sizes = {s.values.size for s in snapshots}
    if len(sizes) != 1:
        raise InvalidState(f"snapshots have differing lengths {sorted(sizes)}")
    return np.stack([s.values for s in snapshots], axis=1)


@dataclass(frozen=True)
class SelectionResult:
    selected_ids: Tuple[int, ...]
    residuals: np.ndarray
    basis: np.ndarray
    low_matrix: np.ndarray
    x_spacing: float
    block_weights: np.ndarray
    requested: int
    stopped_early: bool = False

    @property
    def size(self) -> int:
        return len(self.selected_ids)

    def prefix(self, count: int) -> "SelectionResult":
        """Selection of the first `count` points; greedy selections are nested"""
        if not 1 <= count <= self.size:
            raise KineticUQError(f"prefix {count} outside 1..{self.size}")
        return SelectionResult(
            selected_ids=self.selected_ids[:count],
            residuals=self.residuals[:count],
            basis=self.basis[:, :count],
            low_matrix=self.low_matrix[:, :count],
            x_spacing=self.x_spacing,
            block_weights=self.block_weights,
            requested=count,
            stopped_early=False,
        )


def greedy_select(
    snapshots: Sequence[Snapshot],
    budget: int,
    x_spacing: float,
    block_weights: Optional[np.ndarray] = None,
    require_exact: bool = False,
) -> SelectionResult:
    """Pick, one at a time, the snapshot farthest from the span of those already picked"""
    if not snapshots:
        raise KineticUQError("greedy selection needs at least one snapshot")
    if not 1 <= budget <= len(snapshots):
        raise KineticUQError(f"budget must lie in 1..{len(snapshots)}, got {budget}")
    weights = np.ones(len(SNAPSHOT_BLOCKS)) if block_weights is None else np.asarray(block_weights, dtype=float)

    raw = _stack(snapshots)
    residual = _metric(raw, x_spacing, weights)
    max_norm = np.linalg.norm(residual, axis=0).max()

    basis = np.zeros((raw.shape[0], 0))
    chosen = []
    distances = []
    stopped_early = False
    for step in range(budget):
        norms = np.linalg.norm(residual, axis=0)
        norms[chosen] = -1.0
        best = int(np.argmax(norms))
        distance = norms[best]
        if not distance > GREEDY_TOLERANCE * max_norm:
            stopped_early = True
            logger.warning(f"Greedy selection stopped at {step} of {budget}: residual {distance:.3e} below tolerance")
            break

        q = residual[:, best] / distance
        # one re-orthogonalization pass against the current basis
        q = q - basis @ (basis.T @ q)
        q = q / np.linalg.norm(q)
        residual = residual - np.outer(q, q @ residual)
        basis = np.column_stack([basis, q])
        chosen.append(best)
        distances.append(distance)
        logger.info(f"Greedy step {step + 1}: sample {snapshots[best].sample_id}, d_k = {distance:.6e}")

    if stopped_early and require_exact:
        raise BudgetExceedsRank(f"only {len(chosen)} independent snapshots for a budget of {budget}")

    return SelectionResult(
        selected_ids=tuple(snapshots[i].sample_id for i in chosen),
        residuals=np.array(distances),
        basis=basis,
        low_matrix=raw[:, chosen],
        x_spacing=x_spacing,
        block_weights=weights,
        requested=budget,
        stopped_early=stopped_early,
    )


@dataclass(frozen=True)
class Reconstruction:
    """u^B as the concatenated [rho; u1; T] vector.

    A linear combination of physical snapshots need not be physical, so the vector is kept as is;
    `field` validates it.
    """

    values: np.ndarray
    coefficients: np.ndarray
    low_residual: float
    low_field: Optional[MacroField] = None

    @property
    def physical(self) -> bool:
        rho, _, temperature = np.split(self.values, len(SNAPSHOT_BLOCKS))
        return bool(np.all(rho > 0) and np.all(temperature > 0))

    @property
    def field(self) -> MacroField:
        """Raises NonPositiveDensity or NonPositiveTemperature when the vector is not physical"""
        return MacroField.from_snapshot(self.values)


@dataclass(frozen=True, eq=False)
class BiFidelitySurrogate:
    selection: SelectionResult
    high_matrix: np.ndarray
    low_gramian: np.ndarray
    high_gramian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    kept: np.ndarray = field(repr=False)

    @property
    def rank(self) -> int:
        return int(self.kept.sum())

    @property
    def condition_number(self) -> float:
        kept = self.eigenvalues[self.kept]
        return float(kept.max() / kept.min())

    @property
    def x_spacing(self) -> float:
        return self.selection.x_spacing

    def factorization(self) -> np.ndarray:
        """V diag(lambda) V^T from the stored eigenpairs"""
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T

    def _low_products(self, low_values: np.ndarray) -> np.ndarray:
        weights = self.selection.block_weights
        left = _metric(self.selection.low_matrix, self.x_spacing, weights)
        return left.T @ _metric(np.asarray(low_values, dtype=float), self.x_spacing, weights)

    def _pseudo_solve(self, rhs: np.ndarray) -> np.ndarray:
        vectors = self.eigenvectors[:, self.kept]
        return vectors @ ((vectors.T @ rhs) / self.eigenvalues[self.kept])

    def coefficients(self, low_values: np.ndarray) -> np.ndarray:
        """Solve G^L c = f with f_k = <u^L(z), u^L(z_k)>"""
        return self._pseudo_solve(self._low_products(low_values))

    def low_residual(self, low_values: np.ndarray, coefficients: np.ndarray) -> float:
        difference = np.asarray(low_values, dtype=float) - self.selection.low_matrix @ coefficients
        return float(np.linalg.norm(_metric(difference, self.x_spacing, self.selection.block_weights)))

    def kernel_term(self, low_values: np.ndarray) -> float:
        """|| sqrt(G^H) (G^L)^+ P f || with P the projector onto ker(G^H)"""
        values, vectors = linalg.eigh(self.high_gramian)
        null = values <= GRAMIAN_TRUNCATION * max(values.max(), 0.0)
        projected = vectors[:, null] @ (vectors[:, null].T @ self._low_products(low_values))
        root = (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T
        return float(np.linalg.norm(root @ self._pseudo_solve(projected)))

    def reconstruct_from_low(self, low_field: MacroField) -> Reconstruction:
        low_values = low_field.snapshot()
        if low_values.size != self.high_matrix.shape[0]:
            raise InvalidState(f"low-fidelity field has {low_values.size} entries, surrogate expects {self.high_matrix.shape[0]}")
        c = self.coefficients(low_values)
        combined = self.high_matrix @ c
        return Reconstruction(
            values=combined,
            coefficients=c,
            low_residual=self.low_residual(low_values, c),
            low_field=low_field,
        )

    def prefix(self, count: int) -> "BiFidelitySurrogate":
        """Surrogate built from the first `count` selected points"""
        return _assemble(self.selection.prefix(count), self.high_matrix[:, :count])


def _assemble(selection: SelectionResult, high_matrix: np.ndarray) -> BiFidelitySurrogate:
    weights = selection.block_weights
    low = _metric(selection.low_matrix, selection.x_spacing, weights)
    low_gramian = low.T @ low
    low_gramian = 0.5 * (low_gramian + low_gramian.T)
    high = np.sqrt(selection.x_spacing) * high_matrix
    high_gramian = high.T @ high

    eigenvalues, eigenvectors = linalg.eigh(low_gramian)
    kept = eigenvalues > GRAMIAN_TRUNCATION * eigenvalues.max()
    dropped = int((~kept).sum())
    if dropped:
        logger.warning(f"Gramian truncation dropped {dropped} of {eigenvalues.size} eigenvalues")
    surrogate = BiFidelitySurrogate(
        selection=selection,
        high_matrix=high_matrix,
        low_gramian=low_gramian,
        high_gramian=high_gramian,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        kept=kept,
    )
    return surrogate


def assemble_surrogate(selection: SelectionResult, high_snapshots: Sequence[Snapshot]) -> BiFidelitySurrogate:
    ids = tuple(s.sample_id for s in high_snapshots)
    if ids != selection.selected_ids:
        raise IdMismatch(f"high-fidelity snapshots {ids} do not match the selection {selection.selected_ids}")
    high_matrix = _stack(high_snapshots)
    if high_matrix.shape[0] != selection.low_matrix.shape[0]:
        raise InvalidState("high- and low-fidelity snapshots differ in length")
    surrogate = _assemble(selection, high_matrix)
    logger.info(f"Assembled surrogate: N={selection.size}, rank={surrogate.rank}, cond(G^L)={surrogate.condition_number:.3e}")
    return surrogate


def reconstruct(
    surrogate: BiFidelitySurrogate,
    sample: ParameterSample,
    low_runner: Callable[[ParameterSample], MacroField],
) -> Reconstruction:
    """Online stage: one low-fidelity run at z, projection, combination of stored high-fidelity snapshots"""
    return surrogate.reconstruct_from_low(low_runner(sample))
