"""Multi-area automatic generation control: full simulator, reduced models, analysis."""

from .agc import AgcVariant, allocate, check_feasibility, compute_ace, controller_rhs
from .errors import AgcSimError, ConvergenceError, InfeasibleError, ModelError, SimulationDiverged
from .reduced import build_matrix, equilibrium, phi, reduced_rhs
from .system import (AreaParams, Disturbance, GeneratorParams, SystemModel, TieLine, build_system,
                     steady_state, verify_steady_state_identities)

__all__ = [
    "AgcVariant", "allocate", "check_feasibility", "compute_ace", "controller_rhs",
    "AgcSimError", "ConvergenceError", "InfeasibleError", "ModelError", "SimulationDiverged",
    "build_matrix", "equilibrium", "phi", "reduced_rhs",
    "AreaParams", "Disturbance", "GeneratorParams", "SystemModel", "TieLine", "build_system",
    "steady_state", "verify_steady_state_identities",
]
