"""Discrete-velocity BGK simulation of isentropic gas on pipeline networks."""

from .coupling import (ConvolutionCoupling, FreeOutflow, LinearCoupling, MaxwellianInflow,
                       MaxwellianProjection, MaxwellianWall, ReflectionWall)
from .diagnostics import RunSummary, TraceLedger
from .errors import (BGKError, ConfigurationError, DomainError, ParameterError,
                     SolverError, StepError, VacuumError)
from .gas_core import (S_ENERGY, S_LINEAR, S_ONE, S_SQUARE, EntropyGenerator, GasParams,
                       KineticPair, MacroState, RiemannPair, derive_constants, s_omega)
from .macro_reference import MacroField, macro_solve
from .network import Junction, NetworkTopology, Pipe, simulate
from .pipeline import KineticField, PipeGrid
from .velocity_grid import VelocityGrid

__version__ = "0.1.0"

__all__ = [
    "BGKError", "ConfigurationError", "DomainError", "ParameterError", "SolverError", "StepError",
    "VacuumError",
    "GasParams", "MacroState", "KineticPair", "RiemannPair", "EntropyGenerator", "derive_constants",
    "s_omega", "S_ONE", "S_LINEAR", "S_ENERGY", "S_SQUARE",
    "VelocityGrid", "PipeGrid", "KineticField",
    "LinearCoupling", "ReflectionWall", "MaxwellianWall", "MaxwellianInflow", "MaxwellianProjection",
    "ConvolutionCoupling", "FreeOutflow",
    "Pipe", "Junction", "NetworkTopology", "simulate",
    "TraceLedger", "RunSummary",
    "MacroField", "macro_solve",
]
