"""Initial data, kernel amplitude, Knudsen profiles and parameter samples per experiment family"""
import hashlib
import logging
from typing import List

import numpy as np

from app.core.exceptions import BlockLayoutMismatch
from app.models.fields import DistributionField, MacroField
from app.models.grid import PhaseGrid
from app.models.sample import BlockLayout, ParameterSample
from app.schemas.scenario import EpsilonKind, Family, ScenarioConfig
from app.services.phase_space import maxwellian, moments

logger = logging.getLogger(__name__)

DOUBLE_PEAK_DRIFT = (0.2, 0.0)
SOD_INTERFACE = 0.5
SOD_DENSITY = (1.0, 0.125)


def layout_for(family: Family, d1: int = 7) -> BlockLayout:
    """Block order of z: (rho, T, b) for double_peak/mixed_regime, (b, T) for sod"""
    family = Family(family)
    if family == Family.SOD:
        return BlockLayout(("b", "T"), (d1 + 1, d1))
    return BlockLayout(("rho", "T", "b"), (d1, d1, 1))


def _check_layout(family: Family, sample: ParameterSample) -> int:
    sizes = sample.layout.describe()
    d1 = sizes.get("T")
    if d1 is None or sample.layout != layout_for(family, d1):
        raise BlockLayoutMismatch(
            f"sample {sample.sample_id} layout {sizes} does not fit family {Family(family).value}"
        )
    return d1


def _harmonic_weights(d1: int) -> np.ndarray:
    """1 / (2k) for k = 1..d1"""
    return 1.0 / (2.0 * np.arange(1, d1 + 1))


def double_peak_profiles(sample: ParameterSample, x: np.ndarray):
    """rho_0(x) and T_0(x) of the double-peak data"""
    d1 = _check_layout(Family.DOUBLE_PEAK, sample)
    k = np.arange(1, d1 + 1)
    weights = _harmonic_weights(d1)
    modes = 2.0 * np.pi * np.outer(x, k + 1)
    rho = (2.0 + np.sin(2.0 * np.pi * x) + 0.2 * np.sin(modes) @ (sample.block("rho") * weights)) / 3.0
    temperature = (3.0 + np.cos(2.0 * np.pi * x) + 0.2 * np.cos(modes) @ (sample.block("T") * weights)) / 4.0
    return rho, temperature


def sod_left_temperature(sample: ParameterSample) -> float:
    d1 = _check_layout(Family.SOD, sample)
    return float(1.0 + 0.4 * np.dot(sample.block("T"), _harmonic_weights(d1)))


def sod_profiles(sample: ParameterSample, x: np.ndarray):
    t_left = sod_left_temperature(sample)
    left = x <= SOD_INTERFACE
    rho = np.where(left, SOD_DENSITY[0], SOD_DENSITY[1])
    temperature = np.where(left, t_left, t_left / 8.0)
    return rho, temperature


def initial_distribution(family: Family, sample: ParameterSample, grid: PhaseGrid) -> DistributionField:
    family = Family(family)
    x = grid.x_centers
    if family == Family.SOD:
        rho, temperature = sod_profiles(sample, x)
        values = maxwellian(rho, np.zeros((x.size, 2)), temperature, grid)
    else:
        rho, temperature = double_peak_profiles(sample, x)
        drift = np.broadcast_to(np.asarray(DOUBLE_PEAK_DRIFT), (x.size, 2))
        # each peak carries half the density: rho/(4 pi T) = (rho/2)/(2 pi T)
        values = maxwellian(0.5 * rho, drift, temperature, grid) + maxwellian(0.5 * rho, -drift, temperature, grid)
    return DistributionField(values, time=0.0)


def initial_macro(family: Family, sample: ParameterSample, grid: PhaseGrid) -> MacroField:
    """Moments of the kinetic initial data on the given lattice"""
    return moments(initial_distribution(family, sample, grid), grid)


def kernel_amplitude(family: Family, sample: ParameterSample) -> float:
    family = Family(family)
    _check_layout(family, sample)
    zb = sample.block("b")
    if family == Family.SOD:
        return float(1.0 + 0.5 * np.dot(zb, _harmonic_weights(zb.size)))
    return float(1.0 + 0.5 * zb[0])


def mixed_knudsen(x: np.ndarray) -> np.ndarray:
    shift = 5.5 * (np.asarray(x, dtype=float) - 0.5)
    return 1e-3 + 0.5 * (np.tanh(1.0 - shift) + np.tanh(1.0 + shift))


def epsilon_profile(config: ScenarioConfig, grid: PhaseGrid) -> np.ndarray:
    if config.epsilon.kind == EpsilonKind.MIXED:
        return mixed_knudsen(grid.x_centers)
    return np.full(grid.x_count, config.epsilon.value)


def _stream_key(stream: str) -> int:
    return int.from_bytes(hashlib.sha256(stream.encode()).digest()[:8], "little")


def draw_sample(layout: BlockLayout, seed: int, index: int, stream: str = "train") -> ParameterSample:
    """Sample `index` of a stream; depends only on (seed, stream, index)"""
    bit_generator = np.random.Philox(key=[seed, _stream_key(stream)], counter=[0, 0, 0, index])
    z = np.random.Generator(bit_generator).uniform(-1.0, 1.0, size=layout.dimension)
    return ParameterSample(sample_id=index, z=z, layout=layout, stream=stream)


def draw_samples(config: ScenarioConfig, count: int, seed: int, stream: str = "train") -> List[ParameterSample]:
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    layout = layout_for(config.family, config.d1)
    logger.debug(f"Drawing {count} {stream} samples (seed {seed}, d={layout.dimension})")
    return [draw_sample(layout, seed, index, stream) for index in range(count)]


def zero_sample(config: ScenarioConfig, stream: str = "train") -> ParameterSample:
    layout = layout_for(config.family, config.d1)
    return ParameterSample(sample_id=0, z=np.zeros(layout.dimension), layout=layout, stream=stream)
