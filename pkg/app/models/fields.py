from dataclasses import dataclass
from typing import Tuple

import numpy as np

from app.core.exceptions import InvalidState, NonPositiveDensity, NonPositiveTemperature
from app.models.grid import D_V


def split_conserved(conserved: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Convert W = (rho, rho u1, rho u2, E) on the last axis to (rho, u, T)"""
    conserved = np.asarray(conserved, dtype=float)
    rho = conserved[..., 0]
    bad = np.flatnonzero(~(np.atleast_1d(rho) > 0))
    if bad.size:
        raise NonPositiveDensity("density must be positive", cell=int(bad[0]))

    u = conserved[..., 1:3] / np.expand_dims(rho, -1)
    internal = conserved[..., 3] - 0.5 * rho * np.sum(u ** 2, axis=-1)
    bad = np.flatnonzero(~(np.atleast_1d(internal) > 0))
    if bad.size:
        raise NonPositiveTemperature("internal energy must be positive", cell=int(bad[0]))

    temperature = internal * 2.0 / (D_V * rho)
    return rho, u, temperature


def join_primitive(rho, u1, u2, temperature) -> np.ndarray:
    rho, u1, u2, temperature = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (rho, u1, u2, temperature)))
    energy = 0.5 * rho * (u1 ** 2 + u2 ** 2) + 0.5 * D_V * rho * temperature
    return np.stack([rho, rho * u1, rho * u2, energy], axis=-1)


@dataclass(frozen=True)
class MomentVector:
    """Velocity averages <f m(v)> per cell, last axis (mass, momentum1, momentum2, energy)"""

    values: np.ndarray

    @property
    def mass(self) -> np.ndarray:
        return self.values[..., 0]

    @property
    def momentum(self) -> np.ndarray:
        return self.values[..., 1:3]

    @property
    def energy(self) -> np.ndarray:
        return self.values[..., 3]


@dataclass(frozen=True)
class DistributionField:
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise InvalidState(f"distribution must be (cells, N_v, N_v), got {values.shape}")
        if not np.all(np.isfinite(values)):
            cell = int(np.flatnonzero(~np.all(np.isfinite(values), axis=(1, 2)))[0])
            raise InvalidState("distribution is not finite", cell=cell)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def x_count(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class MacroField:
    """Per-cell conserved vector W = (rho, rho u1, rho u2, E) with its primitive view"""

    conserved: np.ndarray

    def __post_init__(self):
        conserved = np.array(self.conserved, dtype=float)
        if conserved.ndim != 2 or conserved.shape[1] != 4:
            raise InvalidState(f"conserved field must be (cells, 4), got {conserved.shape}")
        if not np.all(np.isfinite(conserved)):
            cell = int(np.flatnonzero(~np.all(np.isfinite(conserved), axis=1))[0])
            raise InvalidState("conserved field is not finite", cell=cell)
        rho, u, temperature = split_conserved(conserved)
        for array in (conserved, u, temperature):
            array.setflags(write=False)
        object.__setattr__(self, "conserved", conserved)
        object.__setattr__(self, "_velocity", u)
        object.__setattr__(self, "_temperature", temperature)

    @classmethod
    def from_primitive(cls, rho, u1, u2, temperature) -> "MacroField":
        return cls(np.atleast_2d(join_primitive(rho, u1, u2, temperature)))

    @classmethod
    def from_snapshot(cls, vector: np.ndarray) -> "MacroField":
        """Inverse of snapshot(); u2 is not part of the snapshot and comes back as zero"""
        rho, u1, temperature = np.split(np.asarray(vector, dtype=float), 3)
        return cls.from_primitive(rho, u1, np.zeros_like(rho), temperature)

    @property
    def x_count(self) -> int:
        return self.conserved.shape[0]

    @property
    def density(self) -> np.ndarray:
        return self.conserved[:, 0]

    @property
    def momentum(self) -> np.ndarray:
        return self.conserved[:, 1:3]

    @property
    def energy(self) -> np.ndarray:
        return self.conserved[:, 3]

    @property
    def velocity(self) -> np.ndarray:
        return self._velocity

    @property
    def temperature(self) -> np.ndarray:
        return self._temperature

    def primitive(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.density, self.velocity, self.temperature

    def snapshot(self) -> np.ndarray:
        """Concatenated [rho; u1; T] over the spatial cells"""
        return np.concatenate([self.density, self.velocity[:, 0], self.temperature])

    def totals(self, x_spacing: float) -> np.ndarray:
        """Domain integrals of mass, momentum and energy"""
        return self.conserved.sum(axis=0) * x_spacing
