"""Exceptions raised by the gate design and simulation layers."""


class AxyGateError(Exception):
    """Base class for package errors."""


class NoSolutionRegion(AxyGateError):
    """The residual scan contains no decoupling solution."""


class PhaseUnreachable(AxyGateError):
    """The requested phase exceeds what the decoupling solutions can reach."""

    def __init__(self, message: str, maxPhase: float):
        super().__init__(message)
        self.maxPhase = maxPhase


class NonConvergence(AxyGateError):
    """A local refinement stalled above its tolerance."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class TruncationOverflow(AxyGateError):
    """Population in the top Fock level exceeded the allowed threshold."""


class StepRejection(AxyGateError):
    """The embedded error estimate of the fixed-step integrator was too large."""


class ConfigError(AxyGateError):
    """Invalid configuration file or value."""
