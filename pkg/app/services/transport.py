"""Upwind MUSCL fluxes in x for every velocity node, shared by both fidelity models"""
import logging
from typing import Optional, Tuple

import numpy as np

from app.models.fields import split_conserved
from app.models.grid import D_V, Boundary, PhaseGrid
from app.services.phase_space import velocity_moments

logger = logging.getLogger(__name__)

GHOST_CELLS = 2
GAMMA = (D_V + 2) / D_V
POSITIVITY_MARGIN = 1e-3
BISECTION_STEPS = 40


def minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def pad_cells(values: np.ndarray, boundary: Boundary) -> np.ndarray:
    """Two ghost cells on each side of the spatial axis"""
    pad = [(GHOST_CELLS, GHOST_CELLS)] + [(0, 0)] * (values.ndim - 1)
    mode = "wrap" if boundary == Boundary.PERIODIC else "edge"
    return np.pad(values, pad, mode=mode)


def interface_flux(values: np.ndarray, grid: PhaseGrid, dt: Optional[float] = None, order: int = 2) -> np.ndarray:
    """Numerical flux v1 f at the N_x + 1 cell interfaces.

    Entry i is the interface between cells i - 1 and i. Upwinding picks the left state where
    v1 > 0 and the right state where v1 < 0. With dt given the reconstruction is time-centred,
    f +- (1 - |v1| dt/dx) slope / 2, otherwise the semi-discrete f +- slope / 2.
    """
    values = np.asarray(values, dtype=float)
    padded = pad_cells(values, grid.boundary)
    v1 = grid.v1

    if order == 1:
        slopes = np.zeros_like(padded[1:-1])
    elif order == 2:
        slopes = minmod(padded[1:-1] - padded[:-2], padded[2:] - padded[1:-1])
    else:
        raise ValueError(f"order must be 1 or 2, got {order}")

    if dt is None:
        half = 0.5
    else:
        half = 0.5 * (1.0 - np.abs(v1) * dt / grid.x_spacing)

    n = values.shape[0]
    # slopes[j] belongs to padded cell j + 1, i.e. physical cell j - 1
    left = padded[1:n + 2] + half * slopes[0:n + 1]
    right = padded[2:n + 3] - half * slopes[1:n + 2]
    return np.maximum(v1, 0.0) * left + np.minimum(v1, 0.0) * right


def flux_divergence(flux: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    return (flux[1:] - flux[:-1]) / grid.x_spacing


def transport_term(values: np.ndarray, grid: PhaseGrid, dt: Optional[float] = None, order: int = 2) -> np.ndarray:
    """v . grad_x f per cell and velocity node"""
    return flux_divergence(interface_flux(values, grid, dt=dt, order=order), grid)


def macro_interface_flux(values: np.ndarray, grid: PhaseGrid, dt: Optional[float] = None, order: int = 2) -> np.ndarray:
    """<v m F> at the N_x + 1 interfaces, shape (N_x + 1, 4)"""
    return velocity_moments(interface_flux(values, grid, dt=dt, order=order), grid).values


def macro_flux_divergence(values: np.ndarray, grid: PhaseGrid, dt: Optional[float] = None, order: int = 2) -> np.ndarray:
    """div_x <v m f> per cell, assembled from the kinetic interface fluxes"""
    return flux_divergence(macro_interface_flux(values, grid, dt=dt, order=order), grid)


def euler_flux(conserved: np.ndarray) -> np.ndarray:
    """x-flux (rho u1, rho u1^2 + p, rho u1 u2, (E + p) u1) with p = rho T"""
    rho, u, temperature = split_conserved(conserved)
    pressure = rho * temperature
    u1 = u[..., 0]
    return np.stack(
        [
            conserved[..., 1],
            conserved[..., 1] * u1 + pressure,
            conserved[..., 2] * u1,
            (conserved[..., 3] + pressure) * u1,
        ],
        axis=-1,
    )


def signal_speed(conserved: np.ndarray) -> np.ndarray:
    _, u, temperature = split_conserved(conserved)
    return np.abs(u[..., 0]) + np.sqrt(GAMMA * temperature)


def interface_states(conserved: np.ndarray, boundary: Boundary) -> Tuple[np.ndarray, np.ndarray]:
    """Cell averages left and right of each of the N_x + 1 interfaces"""
    padded = pad_cells(conserved, boundary)[GHOST_CELLS - 1:-(GHOST_CELLS - 1)]
    return padded[:-1], padded[1:]


def rusanov_flux(conserved: np.ndarray, boundary: Boundary) -> Tuple[np.ndarray, np.ndarray]:
    """First-order local Lax-Friedrichs flux of the Euler system and its interface speeds"""
    left, right = interface_states(conserved, boundary)
    speed = np.maximum(signal_speed(left), signal_speed(right))
    flux = 0.5 * (euler_flux(left) + euler_flux(right)) - 0.5 * speed[:, None] * (right - left)
    return flux, speed


def internal_energy(conserved: np.ndarray) -> np.ndarray:
    """E - |m|^2 / (2 rho), with nonpositive densities mapped to -inf"""
    rho = conserved[..., 0]
    safe = np.where(rho > 0, rho, 1.0)
    internal = conserved[..., 3] - 0.5 * (conserved[..., 1] ** 2 + conserved[..., 2] ** 2) / safe
    return np.where(rho > 0, internal, -np.inf)


def limit_positivity(conserved: np.ndarray, flux: np.ndarray, grid: PhaseGrid, dt: float) -> np.ndarray:
    """Blend each interface flux toward the Rusanov flux until both adjacent updates stay admissible.

    The update of cell i is the mean of W_i - 2 lam F_{i+1/2} and W_i + 2 lam F_{i-1/2}
    (lam = dt/dx). Each half state is admissible under the Rusanov flux when 2 lam a <= 1. Per
    interface the largest theta in [0, 1] is kept for which the half states of
    F_low + theta (F - F_low) keep rho and rho e above POSITIVITY_MARGIN times their Rusanov
    values; the admissible set is convex, so theta is found by bisection. Interfaces that need
    no limiting return F unchanged.
    """
    ratio = 2.0 * dt / grid.x_spacing
    low, speed = rusanov_flux(conserved, grid.boundary)
    if ratio * speed.max() > 1.0:
        logger.warning(f"2 dt a / dx = {ratio * speed.max():.3f} exceeds 1; positivity limiting is not guaranteed")
    left, right = interface_states(conserved, grid.boundary)
    # half states of cell i - 1 (outflow side) and cell i (inflow side) of each interface
    bases = (left - ratio * low, right + ratio * low)
    steps = (-ratio * (flux - low), ratio * (flux - low))
    floors = [(POSITIVITY_MARGIN * base[:, 0], POSITIVITY_MARGIN * internal_energy(base)) for base in bases]

    def admissible(theta: np.ndarray) -> np.ndarray:
        ok = np.ones(theta.shape, dtype=bool)
        for base, step, (rho_floor, energy_floor) in zip(bases, steps, floors):
            states = base + theta[:, None] * step
            ok &= (states[:, 0] >= rho_floor) & (internal_energy(states) >= energy_floor)
        return ok

    limited = ~admissible(np.ones(flux.shape[0]))
    if not limited.any():
        return flux

    lower = np.zeros(flux.shape[0])
    upper = np.ones(flux.shape[0])
    for _ in range(BISECTION_STEPS):
        middle = 0.5 * (lower + upper)
        ok = admissible(middle)
        lower = np.where(ok, middle, lower)
        upper = np.where(ok, upper, middle)
    theta = np.where(limited, lower, 1.0)
    logger.debug(f"positivity limiter active at {int(limited.sum())} interfaces, min theta {theta.min():.3g}")
    return np.where(limited[:, None], low + theta[:, None] * (flux - low), flux)


def macro_update(conserved: np.ndarray, values: np.ndarray, grid: PhaseGrid, dt: float, order: int = 2) -> np.ndarray:
    """W - dt div <v m f> with the kinetic interface fluxes of values, positivity limited"""
    conserved = np.asarray(conserved, dtype=float)
    flux = macro_interface_flux(values, grid, dt=dt, order=order)
    flux = limit_positivity(conserved, flux, grid, dt)
    return conserved - dt * flux_divergence(flux, grid)
