"""Exception hierarchy shared by all modules."""


class BGKError(Exception):
    """Base class for every error raised by bgknet."""


class ParameterError(BGKError, ValueError):
    """Gas parameters outside the admissible range 1 < gamma < 3, kappa > 0."""


class DomainError(BGKError, ValueError):
    """Argument outside the domain of a function (e.g. f not in D, z < 1)."""


class VacuumError(DomainError):
    """Operation undefined at vacuum (rho = 0 or f0 = 0)."""


class SolverError(BGKError, RuntimeError):
    """A nonlinear solve failed to converge or could not be bracketed."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class ConfigurationError(BGKError, ValueError):
    """Invalid coupling, grid, topology or scenario configuration."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations or [])


class StepError(BGKError, RuntimeError):
    """A time step could not be taken (CFL violation, failed coupling...)."""
