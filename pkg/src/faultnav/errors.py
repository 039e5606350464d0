"""Exception types shared across the package."""


class FaultNavError(Exception):
    """Base class for all package errors."""


class ConfigError(FaultNavError):
    """Invalid configuration value, unknown failure kind, malformed table, ..."""


class SimulationFault(FaultNavError):
    """Integration produced a non-finite state."""


class InfeasibleError(FaultNavError):
    """The MPC found no collision-free plan, not even stopping in place.

    The run loop treats this as a fail-safe trigger.
    """


class FailSafeError(FaultNavError):
    """No safe controller exists for the current plausible-failure set."""


class TrainingError(FaultNavError):
    """Bad training input (empty class, missing pair) or corrupt artifact files."""


class ValidationError(FaultNavError):
    """Rejected operator input (unknown failure ids, bad intervention)."""
