"""Pseudospectral simulator for the coupled NLS / inhomogeneous Navier-Stokes
model of superfluidity on the unit torus."""

from .spectral import TorusGrid
from .state import InitialData, SimState, SystemParams, make_initial_data, validate_state
from .dynamics import StepperConfig, run, step
from .diagnostics import DiagnosticsRecord, evaluate

__version__ = "0.1.0"

__all__ = [
    "TorusGrid",
    "InitialData",
    "SimState",
    "SystemParams",
    "make_initial_data",
    "validate_state",
    "StepperConfig",
    "run",
    "step",
    "DiagnosticsRecord",
    "evaluate",
]
