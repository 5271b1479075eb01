import numpy as np
import pytest

from floodtwin.catchment import (CatchmentSpec, ControlVector, Hydrograph,
                                 build_synthetic_catchment)
from floodtwin.solver import SolverConfig


@pytest.fixture(scope="session")
def default_catchment():
    """The default 100x60 valley with a steady hydrograph."""
    hyd = Hydrograph(times=np.array([0.0, 30 * 86400.0]),
                     discharge=np.array([300.0, 300.0]))
    return build_synthetic_catchment(CatchmentSpec(), hyd)


@pytest.fixture(scope="session")
def small_catchment():
    """A 24x40 valley at 100 m cells for cheap dynamic tests."""
    spec = CatchmentSpec(ncols=40, nrows=24, cell_size=100.0,
                         meander_amplitude_cells=3.0,
                         meander_wavelength_cells=32.0)
    hyd = Hydrograph(times=np.array([0.0, 30 * 86400.0]),
                     discharge=np.array([250.0, 250.0]))
    return build_synthetic_catchment(spec, hyd)


@pytest.fixture()
def calibrated_control():
    return ControlVector(ks=np.array([17.0, 45.0, 38.0, 38.0, 40.0, 40.0, 40.0]),
                         mu=1.0, dh=np.zeros(5))


@pytest.fixture()
def solver_config():
    return SolverConfig()
