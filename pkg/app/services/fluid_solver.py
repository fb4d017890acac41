import logging
from dataclasses import dataclass
from typing import Optional

from app.models.fields import MacroField
from app.models.grid import PhaseGrid
from app.models.sample import ParameterSample
from app.schemas.scenario import ScenarioConfig
from app.services import transport
from app.services.kinetic_solver import Observer, check_cfl, time_steps
from app.services.phase_space import maxwellian_of
from app.services.scenarios import initial_macro

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FluidState:
    """Conserved field marched with Maxwellian fluxes on a coarse velocity lattice"""

    macro: MacroField
    grid: PhaseGrid
    time: float = 0.0


def fluid_step(state: FluidState, dt: float, order: int = 2) -> FluidState:
    check_cfl(dt, state.grid)
    equilibrium = maxwellian_of(state.macro, state.grid)
    conserved = transport.macro_update(state.macro.conserved, equilibrium, state.grid, dt, order=order)
    return FluidState(MacroField(conserved), state.grid, state.time + dt)


def run_low_fidelity(
    sample: ParameterSample,
    scenario: ScenarioConfig,
    observer: Optional[Observer] = None,
) -> MacroField:
    """Euler solution at t_final, started from the moments of the kinetic initial data"""
    grid = scenario.low_grid()
    dt = scenario.time_step
    check_cfl(dt, grid)

    state = FluidState(initial_macro(scenario.family, sample, scenario.high_grid()), grid)
    if observer is not None:
        observer(state.time, state.macro)
    for step in time_steps(scenario.final_time, dt):
        state = fluid_step(state, step)
        if observer is not None:
            observer(state.time, state.macro)
    return state.macro
