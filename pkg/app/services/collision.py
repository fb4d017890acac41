import logging
import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np

from app.core.config import settings
from app.core.exceptions import (
    ArtifactError,
    GridMismatch,
    GridTooLarge,
    InvalidState,
    KineticUQError,
    UnsupportedExponent,
)
from app.models.grid import D_V, PhaseGrid
from app.services.phase_space import match_moments, maxwellian, velocity_moments

logger = logging.getLogger(__name__)

KERNEL_CACHE_VERSION = 1
DEFAULT_N_SIGMA = 64
DIRECT_MAX_V_COUNT = 32
# complex entries per chunk of the mode sum
_MODE_SUM_CHUNK = 2_000_000


@dataclass(frozen=True)
class KernelSpec:
    """VHS kernel B = b |v - v*|^lambda with an angle independent cross section"""

    amplitude: float
    exponent: float = 0.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise InvalidState(f"kernel amplitude must be positive, got {self.amplitude}")
        if not (-D_V < self.exponent <= 1.0):
            raise UnsupportedExponent(f"exponent must lie in (-{D_V}, 1], got {self.exponent}")


def collision_frequency(kernel: KernelSpec, rho) -> np.ndarray:
    """Loss rate 2 pi b rho of Maxwell molecules (sigma measure of total mass 2 pi)"""
    return 2.0 * np.pi * kernel.amplitude * np.asarray(rho, dtype=float)


@dataclass(frozen=True, eq=False)
class SpectralKernel:
    """Mode coupling weights for the periodized, truncated Maxwell-molecule operator.

    weights[k, l] holds beta(l, k - l) with the companion mode index in pair_index[k, l];
    entries whose companion falls outside the retained band are zero.
    """

    v_count: int
    v_extent: float
    exponent: float
    n_sigma: int
    weights: np.ndarray
    pair_index: np.ndarray

    def __post_init__(self):
        for array in (self.weights, self.pair_index):
            array.setflags(write=False)

    @property
    def band(self) -> int:
        return (self.v_count - 1) // 2

    @property
    def mode_count(self) -> int:
        return 2 * self.band + 1

    @property
    def support(self) -> float:
        return 2.0 * self.v_extent / (3.0 + np.sqrt(2.0))

    @property
    def radius(self) -> float:
        return 2.0 * self.support

    @cached_property
    def _transforms(self):
        grid = PhaseGrid(1, self.v_count, self.v_extent)
        k = np.arange(-self.band, self.band + 1)
        phase = np.pi * np.outer(k, grid.v_axis) / self.v_extent
        forward = np.exp(-1j * phase) / self.v_count
        inverse = np.exp(1j * phase).T
        return forward, inverse

    def matches(self, grid: PhaseGrid) -> bool:
        return grid.v_count == self.v_count and grid.v_extent == self.v_extent

    def forward(self, values: np.ndarray) -> np.ndarray:
        """Fourier coefficients f_k, k in [-K, K]^2, of lattice data (..., N_v, N_v)"""
        forward, _ = self._transforms
        return np.einsum("aj,...jk,bk->...ab", forward, values, forward)

    def inverse(self, modes: np.ndarray) -> np.ndarray:
        _, inverse = self._transforms
        return np.einsum("ja,...ab,kb->...jk", inverse, modes, inverse)

    def mode_sum(self, modes: np.ndarray) -> np.ndarray:
        """Q_k = sum_{l+m=k} beta(l, m) f_l f_m for modes shaped (cells, 2K+1, 2K+1)"""
        cells = modes.shape[0]
        flat = modes.reshape(cells, -1)
        out = np.empty_like(flat)
        chunk = max(1, _MODE_SUM_CHUNK // self.weights.size)
        for start in range(0, cells, chunk):
            block = flat[start:start + chunk]
            out[start:start + chunk] = np.einsum(
                "kl,ckl,cl->ck", self.weights, block[:, self.pair_index], block
            )
        return out.reshape(modes.shape)


def _angular_average(x: np.ndarray, n_sigma: int) -> np.ndarray:
    """(2 pi / n_sigma) sum_j cos(x cos theta_j), the n_sigma point rule for 2 pi J0(x)"""
    theta = 2.0 * np.pi * np.arange(n_sigma) / n_sigma
    return 2.0 * np.pi * np.cos(x[..., None] * np.cos(theta)).mean(axis=-1)


def _compute_weights(v_count: int, v_extent: float, n_sigma: int):
    band = (v_count - 1) // 2
    radius = 4.0 * v_extent / (3.0 + np.sqrt(2.0))
    nodes, node_weights = np.polynomial.legendre.leggauss(max(32, 4 * v_count))
    rho = 0.5 * radius * (nodes + 1.0)
    rho_weights = 0.5 * radius * node_weights * rho

    # Gain weight depends on the modes only through |l+m|^2 and |l-m|^2, both integers
    max_norm = 8 * band * band
    scale = 0.5 * np.pi / v_extent
    angular = _angular_average(scale * np.outer(np.sqrt(np.arange(max_norm + 1)), rho), n_sigma)
    gain = (angular * rho_weights) @ angular.T

    axis = np.arange(-band, band + 1)
    k1, k2 = np.meshgrid(axis, axis, indexing="ij")
    modes = np.stack([k1.ravel(), k2.ravel()], axis=-1)
    k = modes[:, None, :]
    l = modes[None, :, :]
    m = k - l
    valid = np.all(np.abs(m) <= band, axis=-1)

    def norm_index(vector):
        return np.where(valid, np.sum(vector ** 2, axis=-1), 0)

    # l + m = k, so the gain pair is (|k|^2, |l - m|^2) and the loss pair (|2m|^2, 0)
    total = np.broadcast_to(k, m.shape)
    weights = gain[norm_index(total), norm_index(l - m)] - gain[norm_index(2 * m), 0]
    weights = np.where(valid, weights, 0.0)
    pair_index = np.where(valid, (m[..., 0] + band) * (2 * band + 1) + (m[..., 1] + band), 0)
    return weights, pair_index


def _cache_path(cache_dir: Union[str, Path], v_count: int, v_extent: float, exponent: float, n_sigma: int) -> Path:
    return Path(cache_dir) / f"spectral_nv{v_count}_lv{v_extent:g}_lam{exponent:g}_ns{n_sigma}.npz"


def _load_cached(path: Path) -> Optional[SpectralKernel]:
    try:
        with np.load(path) as data:
            version = int(data["version"])
            if version != KERNEL_CACHE_VERSION:
                logger.warning(f"Kernel cache {path} has version {version}, expected {KERNEL_CACHE_VERSION}; recomputing")
                return None
            return SpectralKernel(
                v_count=int(data["v_count"]),
                v_extent=float(data["v_extent"]),
                exponent=float(data["exponent"]),
                n_sigma=int(data["n_sigma"]),
                weights=np.array(data["weights"]),
                pair_index=np.array(data["pair_index"]),
            )
    except (OSError, KeyError, ValueError) as e:
        raise ArtifactError(f"unreadable kernel cache {path}: {e}") from e


def _store(kernel: SpectralKernel, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as handle:
        np.savez(
            handle,
            version=KERNEL_CACHE_VERSION,
            v_count=kernel.v_count,
            v_extent=kernel.v_extent,
            exponent=kernel.exponent,
            n_sigma=kernel.n_sigma,
            weights=kernel.weights,
            pair_index=kernel.pair_index,
        )
    os.replace(tmp, path)


def precompute_spectral(
    grid: PhaseGrid,
    exponent: float = 0.0,
    n_sigma: int = DEFAULT_N_SIGMA,
    cache_dir: Optional[Union[str, Path]] = None,
) -> SpectralKernel:
    """Build (or load from the cache) the spectral weight table for a velocity lattice"""
    if exponent != 0.0:
        raise UnsupportedExponent(f"spectral weights exist only for Maxwell molecules, got exponent {exponent}")
    if n_sigma < 8:
        raise KineticUQError(f"n_sigma must be at least 8, got {n_sigma}")

    cache_dir = cache_dir if cache_dir is not None else settings.kernel_cache_dir
    path = None
    if cache_dir:
        path = _cache_path(cache_dir, grid.v_count, grid.v_extent, exponent, n_sigma)
        if path.exists():
            kernel = _load_cached(path)
            if kernel is not None:
                logger.debug(f"Kernel cache hit {path}")
                return kernel

    weights, pair_index = _compute_weights(grid.v_count, grid.v_extent, n_sigma)
    kernel = SpectralKernel(
        v_count=grid.v_count,
        v_extent=grid.v_extent,
        exponent=exponent,
        n_sigma=n_sigma,
        weights=weights,
        pair_index=pair_index,
    )
    logger.info(f"Precomputed spectral kernel N_v={grid.v_count}, L_v={grid.v_extent}, N_sigma={n_sigma}")
    if path is not None:
        _store(kernel, path)
    return kernel


def _as_cells(fv: np.ndarray, v_count: int) -> np.ndarray:
    fv = np.asarray(fv, dtype=float)
    if fv.shape[-2:] != (v_count, v_count):
        raise GridMismatch(f"velocity array {fv.shape} does not fit a lattice of {v_count}")
    return fv.reshape((-1, v_count, v_count))


def equilibrium_weight(fv: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Maxwellian of the raw moments of f per cell, the unit Maxwellian where they are not physical"""
    cells = _as_cells(fv, grid.v_count)
    raw = velocity_moments(cells, grid).values
    weight = np.empty_like(cells)
    for c, (rho, m1, m2, energy) in enumerate(raw):
        internal = energy - 0.5 * (m1 ** 2 + m2 ** 2) / rho if rho > 0 else -1.0
        if internal > 0:
            temperature = 2.0 * internal / (D_V * rho)
            weight[c] = maxwellian(rho, np.array([m1, m2]) / rho, temperature, grid)
        else:
            weight[c] = maxwellian(1.0, np.zeros(D_V), 1.0, grid)
    return weight


def repair_conservation(qv: np.ndarray, weight: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Remove the moment defect of Q along weight * (a + b.v + c|v|^2/2)"""
    cells = _as_cells(qv, grid.v_count)
    target = np.zeros((cells.shape[0], 4))
    repaired = match_moments(cells, target, _as_cells(weight, grid.v_count), grid)
    return repaired.reshape(np.shape(qv))


def spectral_integral(fv: np.ndarray, kernel: SpectralKernel, amplitude: float) -> np.ndarray:
    """Unrepaired Q(f, f) per cell straight from the inverse transform, imaginary part included"""
    cells = _as_cells(fv, kernel.v_count)
    return amplitude * kernel.inverse(kernel.mode_sum(kernel.forward(cells)))


def imaginary_ratio(values: np.ndarray) -> float:
    """max|Im| / max|Re|; round-off level for real input and a conjugate-symmetric weight table"""
    scale = np.abs(values.real).max()
    return float(np.abs(values.imag).max() / scale) if scale > 0 else 0.0


def collide_spectral(
    fv: np.ndarray,
    kernel: SpectralKernel,
    amplitude: float,
    grid: Optional[PhaseGrid] = None,
    repair: bool = True,
    equilibrium: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Q(f, f) on one velocity array (N_v, N_v) or a stack of cells (cells, N_v, N_v).

    With repair the moment defect is projected out along the local Maxwellian, or along
    `equilibrium` when the caller already holds it.
    """
    if grid is not None and not kernel.matches(grid):
        raise GridMismatch(
            f"kernel built for N_v={kernel.v_count}, L_v={kernel.v_extent}; grid has N_v={grid.v_count}, L_v={grid.v_extent}"
        )
    shape = np.shape(fv)
    cells = _as_cells(fv, kernel.v_count)

    complex_q = spectral_integral(cells, kernel, amplitude)
    qv = complex_q.real
    if logger.isEnabledFor(logging.DEBUG):
        logger.debug(f"spectral collision imaginary part {imaginary_ratio(complex_q):.2e} of the real part")

    if repair:
        grid = grid or PhaseGrid(1, kernel.v_count, kernel.v_extent)
        weight = equilibrium_weight(cells, grid) if equilibrium is None else equilibrium
        qv = repair_conservation(qv, weight, grid)
    return qv.reshape(shape)


def _bilinear(values: np.ndarray, grid: PhaseGrid, points: np.ndarray) -> np.ndarray:
    n = grid.v_count
    padded = np.pad(values, 1)
    # padded node j sits at -L_v + (j - 1/2) h
    coords = (points + grid.v_extent) / grid.v_spacing + 0.5
    base = np.clip(np.floor(coords).astype(int), 0, n)
    frac = coords - base
    i, j = base[..., 0], base[..., 1]
    a, b = frac[..., 0], frac[..., 1]
    out = (
        (1 - a) * (1 - b) * padded[i, j]
        + a * (1 - b) * padded[i + 1, j]
        + (1 - a) * b * padded[i, j + 1]
        + a * b * padded[i + 1, j + 1]
    )
    inside = np.all(np.abs(points) <= grid.v_extent, axis=-1)
    return np.where(inside, out, 0.0)


def _trigonometric(modes: np.ndarray, grid: PhaseGrid, points: np.ndarray) -> np.ndarray:
    band = (grid.v_count - 1) // 2
    k = np.arange(-band, band + 1)
    flat = points.reshape(-1, D_V)
    e1 = np.exp(1j * np.pi * np.outer(flat[:, 0], k) / grid.v_extent)
    e2 = np.exp(1j * np.pi * np.outer(flat[:, 1], k) / grid.v_extent)
    out = np.sum((e1 @ modes) * e2, axis=-1).real.reshape(points.shape[:-1])
    inside = np.all(np.abs(points) <= grid.v_extent, axis=-1)
    return np.where(inside, out, 0.0)


def collide_direct(
    fv: np.ndarray,
    kernel: KernelSpec,
    grid: PhaseGrid,
    n_sigma: int = 32,
    interpolation: str = "bilinear",
) -> np.ndarray:
    """Direct quadrature of Q(f, f) over v*, sigma on a single velocity array; test oracle only.

    Post-collision values come from interpolation of the lattice data, "bilinear" or
    "spectral" (trigonometric interpolant), both zero outside [-L_v, L_v]^2.
    """
    if grid.v_count > DIRECT_MAX_V_COUNT:
        raise GridTooLarge(f"direct collision is limited to N_v <= {DIRECT_MAX_V_COUNT}, got {grid.v_count}")
    if n_sigma < 8:
        raise KineticUQError(f"n_sigma must be at least 8, got {n_sigma}")
    values = np.asarray(fv, dtype=float)
    if values.shape != (grid.v_count, grid.v_count):
        raise GridMismatch(f"velocity array {values.shape} does not fit a lattice of {grid.v_count}")

    if interpolation == "bilinear":
        def interpolate(points):
            return _bilinear(values, grid, points)
    elif interpolation == "spectral":
        band = (grid.v_count - 1) // 2
        k = np.arange(-band, band + 1)
        forward = np.exp(-1j * np.pi * np.outer(k, grid.v_axis) / grid.v_extent) / grid.v_count
        modes = forward @ values @ forward.T

        def interpolate(points):
            return _trigonometric(modes, grid, points)
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")

    theta = 2.0 * np.pi * np.arange(n_sigma) / n_sigma
    sigma = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    opposite = (np.arange(n_sigma) + n_sigma // 2) % n_sigma if n_sigma % 2 == 0 else None

    nodes = np.stack([grid.v1.ravel(), grid.v2.ravel()], axis=-1)
    f_flat = values.ravel()
    out = np.empty_like(f_flat)

    for p, v in enumerate(nodes):
        g = v - nodes
        g_norm = np.sqrt(np.sum(g ** 2, axis=-1))
        if kernel.exponent == 0.0:
            cross = np.full_like(g_norm, kernel.amplitude)
        else:
            safe = np.where(g_norm > 0, g_norm, 1.0)
            cross = np.where(g_norm > 0, kernel.amplitude * safe ** kernel.exponent, 0.0)

        center = 0.5 * (v + nodes)
        offset = 0.5 * g_norm[:, None, None] * sigma[None, :, :]
        f_prime = interpolate(center[:, None, :] + offset)
        if opposite is not None:
            f_star_prime = f_prime[:, opposite]
        else:
            f_star_prime = interpolate(center[:, None, :] - offset)

        gain = np.sum(cross * (f_prime * f_star_prime).mean(axis=-1))
        loss = f_flat[p] * np.sum(cross * f_flat)
        out[p] = 2.0 * np.pi * grid.v_weight * (gain - loss)

    return out.reshape(values.shape)


def penalty_beta(fv: np.ndarray, mv: np.ndarray, qv: np.ndarray, fallback, floor: float = 1e-8) -> np.ndarray:
    """Per cell max |Q / (f - M)| over nodes where |f - M| > floor * max|f|, else the fallback rate"""
    f = np.asarray(fv, dtype=float)
    single = f.ndim == 2
    f = f.reshape((-1,) + f.shape[-2:])
    m = np.asarray(mv, dtype=float).reshape(f.shape)
    q = np.asarray(qv, dtype=float).reshape(f.shape)
    fallback = np.broadcast_to(np.asarray(fallback, dtype=float), (f.shape[0],))

    diff = f - m
    threshold = floor * np.max(np.abs(f), axis=(1, 2), keepdims=True)
    mask = np.abs(diff) > threshold
    ratio = np.where(mask, np.abs(q) / np.where(mask, np.abs(diff), 1.0), 0.0)
    beta = np.where(mask.any(axis=(1, 2)), ratio.max(axis=(1, 2)), fallback)
    return beta[0] if single else beta
