import numpy as np
import pytest

from app.models.fields import MacroField
from app.models.grid import PhaseGrid
from app.schemas.scenario import ScenarioConfig
from app.services.bifidelity import Fidelity, Snapshot
from app.services.collision import precompute_spectral


@pytest.fixture(scope="session")
def grid16():
    return PhaseGrid(x_count=1, v_count=16)


@pytest.fixture(scope="session")
def kernel16(grid16):
    return precompute_spectral(grid16, n_sigma=64, cache_dir="")


@pytest.fixture(scope="session")
def grid24():
    return PhaseGrid(x_count=1, v_count=24)


@pytest.fixture(scope="session")
def kernel24(grid24):
    return precompute_spectral(grid24, n_sigma=64, cache_dir="")


# a scenario small enough to train and evaluate in seconds
TINY_SCENARIO = {
    "family": "double_peak",
    "d1": 1,
    "grid": {"n_x": 8, "n_v_high": 12, "n_v_low": 8, "n_sigma": 32},
    "t_final": 0.02,
    "epsilon": {"kind": "constant", "value": 1e-2},
    "n_train": 6,
    "n_test": 3,
    "budget": 3,
    "seed": 11,
}


@pytest.fixture
def tiny_config() -> dict:
    return dict(TINY_SCENARIO)


@pytest.fixture
def tiny_scenario(tiny_config) -> ScenarioConfig:
    return ScenarioConfig.from_dict(tiny_config)


def smooth_field(x: np.ndarray, phase: float, amplitude: float = 0.2) -> MacroField:
    rho = 1.0 + amplitude * np.sin(2 * np.pi * x + phase)
    u1 = 0.5 * amplitude * np.cos(2 * np.pi * x + 2 * phase)
    temperature = 1.0 + amplitude * np.cos(4 * np.pi * x - phase)
    return MacroField.from_primitive(rho, u1, np.zeros_like(rho), temperature)


@pytest.fixture
def synthetic_snapshots():
    """Paired low/high snapshots of a smooth parametric family, well conditioned for small N"""
    x = (np.arange(20) + 0.5) / 20
    phases = np.linspace(0.0, 2.5, 12)
    low, high = [], []
    for i, phase in enumerate(phases):
        high_field = smooth_field(x, phase)
        low_field = smooth_field(x, phase + 0.05, amplitude=0.18)
        high.append(Snapshot.from_field(i, high_field, Fidelity.HIGH))
        low.append(Snapshot.from_field(i, low_field, Fidelity.LOW))
    return x, low, high


def crossing_pair():
    """Two snapshot pairs and a physical low-fidelity target whose coefficients are (-1, 2).

    The matching high-fidelity combination has T = 2 * 1 - 3 = -1 everywhere.
    """
    x = (np.arange(20) + 0.5) / 20
    ones, zeros = np.ones(20), np.zeros(20)
    low = [Snapshot.from_field(i, smooth_field(x, phase), Fidelity.LOW) for i, phase in enumerate((0.0, 0.6))]
    high = [
        Snapshot.from_field(i, MacroField.from_primitive(ones, zeros, zeros, np.full(20, t)), Fidelity.HIGH)
        for i, t in enumerate((3.0, 1.0))
    ]
    target = MacroField.from_snapshot(2.0 * low[1].values - low[0].values)
    return x, low, high, target
