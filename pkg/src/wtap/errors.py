"""Exception types shared across the package."""


class WtapError(Exception):
    """Base class for all package errors."""


class ShapeError(WtapError, ValueError):
    """Dimension mismatch between related objects."""


class ContractError(WtapError, ValueError):
    """A precondition on an input was violated (asymmetry, bad config, ...)."""


class NumericError(WtapError, ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""


class DataFormatError(WtapError, ValueError):
    """A dataset or checkpoint file is malformed, truncated, or mis-versioned."""


class TrainingDiverged(WtapError, RuntimeError):
    """Training loss became non-finite; carries the epoch/batch it happened in."""

    def __init__(self, epoch, batch, message="training loss is not finite"):
        super().__init__(f"{message} (epoch {epoch}, batch {batch})")
        self.epoch = epoch
        self.batch = batch
