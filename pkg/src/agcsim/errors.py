"""Exception hierarchy shared by the modules and mapped to CLI exit codes."""


class AgcSimError(Exception):
    """Base class for all package errors."""


class ModelError(AgcSimError, ValueError):
    """Invalid system or controller parameters.

    ``field`` names the offending parameter (e.g. ``areas[0].b``) when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
        self.reason = message


class InfeasibleError(AgcSimError):
    """A disturbance lies outside the regulation capacity of some area."""

    def __init__(self, message, areas=()):
        super().__init__(message)
        self.areas = tuple(areas)


class ConvergenceError(AgcSimError):
    """Newton iteration failed to reach the residual tolerance."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class SimulationDiverged(AgcSimError):
    """Integration produced a non-finite state."""

    def __init__(self, time):
        super().__init__(f"non-finite state at t = {time:.6g} s")
        self.time = time
