"""Exception types shared across the package.

Every module raises one of these rather than bare ValueError so the CLI can
map failures onto stable exit codes (see qecd.cli).
"""


class QecdError(Exception):
    """Base class for all package errors."""


class ShapeError(QecdError):
    """Tensor dimension mismatch. Message always carries both shapes."""


class ParameterError(QecdError):
    """Invalid argument value (bad distance, rate outside [0,1], ...)."""


class NumericError(QecdError):
    """Non-finite value produced by a forward/backward pass."""


class StateError(QecdError):
    """Optimizer or training state is inconsistent (missing momentum buffer)."""


class CheckpointError(QecdError):
    """Checkpoint file is malformed or incompatible with the requested use."""


class FitError(QecdError):
    """Regression has too few usable points."""


class DataError(QecdError):
    """Measured or loaded data violates a precondition (non-positive times...)."""


class ReproducibilityError(QecdError):
    """Two runs that must agree bit-for-bit did not."""
