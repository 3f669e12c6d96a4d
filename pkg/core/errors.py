"""Exception hierarchy for the light-source-transfer engine."""


class RelightError(Exception):
    """Base class for every error the engine reports to a caller."""


class PreconditionError(RelightError, ValueError):
    """Operation called with an argument outside its domain."""


class ShapeError(PreconditionError):
    """Tensor shape or size precondition violated."""


class GradientError(RelightError, RuntimeError):
    """Backward pass or optimizer step cannot proceed."""


class CheckpointError(RelightError):
    """Checkpoint file is corrupt or inconsistent with its architecture."""


class CorpusError(RelightError):
    """Corpus directory or one of its files is unusable."""


class ImageFormatError(CorpusError):
    """Image file is corrupt, not RGB, or not square."""


class ConfigError(RelightError, ValueError):
    """Configuration value or command-line flag is invalid."""


class TrainingDivergedError(RelightError, RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, step: int, loss_name: str, value: float):
        self.step = step
        self.loss_name = loss_name
        self.value = value
        super().__init__(f"non-finite loss {loss_name}={value} at step {step}")


class MetricError(RelightError, ValueError):
    """Metric input outside its valid range."""
