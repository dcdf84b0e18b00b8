"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: configuration and input problems exit
with 2, solver divergence with 3, transport failures with 4.
"""


class NewtonAdmmError(Exception):
    """Base class for package errors."""


class ConfigError(NewtonAdmmError, ValueError):
    """Inconsistent dimensions or invalid parameter values."""


class InputError(NewtonAdmmError, ValueError):
    """Bad input data (non-finite features, malformed files, bad labels)."""


class SolverError(NewtonAdmmError, RuntimeError):
    """A numerical routine could not continue."""


class DivergenceError(SolverError):
    """Objective blew up (non-finite, or far above its starting value)."""


class TransportError(NewtonAdmmError, RuntimeError):
    """A worker could not be reached or did not answer in time."""


class ProtocolError(TransportError):
    """A frame violated the wire protocol (bad version, kind, or tag)."""
