"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid parameters or array shapes passed to an operation."""


class TrainingError(RuntimeError):
    """Numeric failure during training (NaN gradients, empty classes)."""


class FormatError(ValueError):
    """A persisted file has a bad magic number, header or size."""


class SimulationWarning(UserWarning):
    """An echo component was truncated or skipped during simulation."""
