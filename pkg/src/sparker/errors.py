"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so layers should raise the
most specific type that applies.
"""


class SparkerError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SparkerError):
    """Invalid or inconsistent run configuration."""


class DataError(SparkerError):
    """Malformed input data (files, point sets, benchmark names)."""


class TrainingDivergedError(SparkerError):
    """Non-finite loss or parameters encountered during training."""

    def __init__(self, step: int, detail: str = ""):
        self.step = step
        msg = f"training diverged at step {step}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ProvenanceMismatchError(SparkerError):
    """Calibration store built with a different configuration."""
