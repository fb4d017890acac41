import logging
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Optional, Union

import numpy as np

from app.core.exceptions import CFLViolation, InvalidState, StateBlowup
from app.models.fields import DistributionField, MacroField
from app.models.grid import PhaseGrid
from app.models.sample import ParameterSample
from app.schemas.scenario import ScenarioConfig
from app.services import transport
from app.services.collision import (
    KernelSpec,
    SpectralKernel,
    collide_spectral,
    collision_frequency,
    penalty_beta,
    precompute_spectral,
)
from app.services.phase_space import match_moments, maxwellian_of, moments, resolved_maxwellian
from app.services.scenarios import epsilon_profile, initial_distribution, kernel_amplitude

logger = logging.getLogger(__name__)

BLOWUP_LIMIT = 1e10

Observer = Callable[[float, MacroField], None]


def check_cfl(dt: float, grid: PhaseGrid) -> float:
    number = dt * grid.v_extent / grid.x_spacing
    if not number < 1.0:
        raise CFLViolation(f"dt * L_v / dx = {number:.4f} must stay below 1")
    return number


def time_steps(t_final: float, dt: float) -> Iterator[float]:
    """Step sizes reaching t_final exactly; the last one is truncated"""
    count = int(np.ceil(t_final / dt - 1e-9))
    for n in range(count - 1):
        yield dt
    yield t_final - (count - 1) * dt


@dataclass(frozen=True)
class KineticStepConfig:
    dt: float
    epsilon: np.ndarray
    t_final: float
    beta_cap: Optional[float] = 2.0
    well_balanced: bool = True
    order: int = 2

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidState(f"time step must be positive, got {self.dt}")
        if not self.t_final > 0:
            raise InvalidState(f"final time must be positive, got {self.t_final}")
        epsilon = np.array(self.epsilon, dtype=float).reshape(-1)
        bad = np.flatnonzero(~(epsilon > 0))
        if bad.size:
            raise InvalidState("Knudsen number must be positive", cell=int(bad[0]))
        epsilon.setflags(write=False)
        object.__setattr__(self, "epsilon", epsilon)


@dataclass(frozen=True)
class KineticState:
    """f^n with its moments W^n and Maxwellian M^n"""

    f: DistributionField
    grid: PhaseGrid
    macro: MacroField
    equilibrium: np.ndarray

    @classmethod
    def from_distribution(cls, f: Union[DistributionField, np.ndarray], grid: PhaseGrid, time: float = 0.0) -> "KineticState":
        if not isinstance(f, DistributionField):
            f = DistributionField(f, time=time)
        if f.values.shape != grid.distribution_shape:
            raise InvalidState(f"distribution shape {f.values.shape} does not match grid {grid.distribution_shape}")
        macro = moments(f, grid)
        equilibrium = maxwellian_of(macro, grid)
        equilibrium.setflags(write=False)
        return cls(f=f, grid=grid, macro=macro, equilibrium=equilibrium)

    @property
    def time(self) -> float:
        return self.f.time


def transport_term(f: Union[DistributionField, np.ndarray], grid: PhaseGrid, dt: Optional[float] = None, order: int = 2) -> np.ndarray:
    values = f.values if isinstance(f, DistributionField) else np.asarray(f, dtype=float)
    return transport.transport_term(values, grid, dt=dt, order=order)


def macro_preupdate(state: KineticState, cfg: KineticStepConfig, dt: Optional[float] = None) -> MacroField:
    """W^{n+1} = W^n - dt div <v m f^n>, positivity limited"""
    dt = cfg.dt if dt is None else dt
    return MacroField(transport.macro_update(state.macro.conserved, state.f.values, state.grid, dt, order=cfg.order))


def kinetic_step(
    state: KineticState,
    cfg: KineticStepConfig,
    kernel: SpectralKernel,
    spec: KernelSpec,
    dt: Optional[float] = None,
) -> KineticState:
    """One penalized step solved explicitly through the macroscopic pre-update"""
    grid = state.grid
    dt = cfg.dt if dt is None else dt
    check_cfl(dt, grid)
    if cfg.epsilon.size != grid.x_count:
        raise InvalidState(f"Knudsen profile has {cfg.epsilon.size} cells, grid has {grid.x_count}")

    f = state.f.values
    m_now = state.equilibrium
    macro_next = macro_preupdate(state, cfg, dt)
    m_next = maxwellian_of(macro_next, grid)
    # moment corrections go along Maxwellians no colder than the lattice resolves
    weight_now = resolved_maxwellian(state.macro, grid)
    weight_next = resolved_maxwellian(macro_next, grid)

    q = collide_spectral(f, kernel, spec.amplitude, grid, equilibrium=weight_now)
    if cfg.well_balanced:
        # discrete Q(M^n) is a pure lattice artefact; removing it keeps equilibria stationary
        q = q - collide_spectral(m_now, kernel, spec.amplitude, grid, equilibrium=weight_now)

    nu = collision_frequency(spec, state.macro.density)
    beta = penalty_beta(f, m_now, q, fallback=nu)
    if cfg.beta_cap is not None:
        beta = np.minimum(beta, cfg.beta_cap * nu)
    logger.debug(f"t={state.time:.5f} beta in [{beta.min():.4g}, {beta.max():.4g}]")

    ratio = (dt / cfg.epsilon)[:, None, None]
    beta = beta[:, None, None]
    explicit = f - dt * transport_term(f, grid, dt=dt, order=cfg.order)
    f_next = (explicit + ratio * (q - beta * (m_now - f) + beta * m_next)) / (1.0 + ratio * beta)

    f_next = match_moments(f_next, macro_next.conserved, weight_next, grid)
    blown = ~np.all(np.isfinite(f_next) & (np.abs(f_next) <= BLOWUP_LIMIT), axis=(1, 2))
    if blown.any():
        raise StateBlowup(f"distribution exceeds {BLOWUP_LIMIT:g} at t={state.time + dt:.5f}", cell=int(np.flatnonzero(blown)[0]))

    return KineticState.from_distribution(DistributionField(f_next, time=state.time + dt), grid)


def advance(
    state: KineticState,
    cfg: KineticStepConfig,
    kernel: SpectralKernel,
    spec: KernelSpec,
    observer: Optional[Observer] = None,
) -> KineticState:
    if observer is not None:
        observer(state.time, state.macro)
    steps = 0
    for dt in time_steps(cfg.t_final - state.time, cfg.dt):
        state = kinetic_step(state, cfg, kernel, spec, dt=dt)
        steps += 1
        if observer is not None:
            observer(state.time, state.macro)
    # land on t_final without accumulated round-off in the clock
    state = replace(state, f=DistributionField(state.f.values, time=cfg.t_final))
    logger.debug(f"Kinetic run finished after {steps} steps")
    return state


def step_config(scenario: ScenarioConfig, grid: PhaseGrid) -> KineticStepConfig:
    return KineticStepConfig(
        dt=scenario.time_step,
        epsilon=epsilon_profile(scenario, grid),
        t_final=scenario.final_time,
        beta_cap=scenario.beta_cap,
        well_balanced=scenario.well_balanced,
    )


def run_high_fidelity(
    sample: ParameterSample,
    scenario: ScenarioConfig,
    kernel: Optional[SpectralKernel] = None,
    observer: Optional[Observer] = None,
) -> MacroField:
    """Kinetic solution at t_final for one parameter sample"""
    grid = scenario.high_grid()
    if kernel is None:
        kernel = precompute_spectral(grid, n_sigma=scenario.grid.n_sigma)
    spec = KernelSpec(amplitude=kernel_amplitude(scenario.family, sample))
    cfg = step_config(scenario, grid)
    check_cfl(cfg.dt, grid)

    state = KineticState.from_distribution(initial_distribution(scenario.family, sample, grid), grid)
    state = advance(state, cfg, kernel, spec, observer=observer)
    return state.macro
