from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property

import numpy as np

from app.core.exceptions import InvalidState

# Velocity dimension; every scenario is 1D in space and 2D in velocity
D_V = 2


class Boundary(str, Enum):
    PERIODIC = "periodic"
    ZERO_GRADIENT = "zero_gradient"


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PhaseGrid:
    """Spatial cells on [0, 1] and a cell-centred velocity lattice on [-L_v, L_v]^2"""

    x_count: int
    v_count: int
    v_extent: float = 8.4
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        if self.x_count < 1:
            raise InvalidState(f"x_count must be positive, got {self.x_count}")
        if self.v_count < 4:
            raise InvalidState(f"v_count must be at least 4, got {self.v_count}")
        if self.v_extent <= 0:
            raise InvalidState(f"v_extent must be positive, got {self.v_extent}")
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @property
    def x_spacing(self) -> float:
        return 1.0 / self.x_count

    @cached_property
    def x_centers(self) -> np.ndarray:
        return _frozen((np.arange(self.x_count) + 0.5) * self.x_spacing)

    @property
    def v_spacing(self) -> float:
        return 2.0 * self.v_extent / self.v_count

    @cached_property
    def v_axis(self) -> np.ndarray:
        # (j + 1/2 - N/2) is exact in binary, so the axis is bitwise odd under v -> -v
        offsets = np.arange(self.v_count) + 0.5 - 0.5 * self.v_count
        return _frozen(offsets * self.v_spacing)

    @cached_property
    def _mesh(self):
        v1, v2 = np.meshgrid(self.v_axis, self.v_axis, indexing="ij")
        return _frozen(v1), _frozen(v2)

    @property
    def v1(self) -> np.ndarray:
        return self._mesh[0]

    @property
    def v2(self) -> np.ndarray:
        return self._mesh[1]

    @cached_property
    def speed_sq(self) -> np.ndarray:
        return _frozen(self.v1 ** 2 + self.v2 ** 2)

    @property
    def v_weight(self) -> float:
        return self.v_spacing ** 2

    @cached_property
    def v_weights(self) -> np.ndarray:
        return _frozen(np.full((self.v_count, self.v_count), self.v_weight))

    @cached_property
    def collision_invariants(self) -> np.ndarray:
        """m(v) = (1, v1, v2, |v|^2/2) stacked on the leading axis"""
        return _frozen(np.stack([np.ones_like(self.v1), self.v1, self.v2, 0.5 * self.speed_sq]))

    @property
    def distribution_shape(self):
        return (self.x_count, self.v_count, self.v_count)

    def with_velocity_count(self, v_count: int) -> "PhaseGrid":
        return replace(self, v_count=v_count)

    def same_lattice(self, other: "PhaseGrid") -> bool:
        return self.v_count == other.v_count and self.v_extent == other.v_extent
