"""Exception types shared across the package."""


class McqaError(Exception):
    """Base class for all package errors."""


class DatasetParseError(McqaError):
    """A dataset line could not be parsed.  Carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ValidationError(McqaError):
    """A record or argument violates a documented invariant."""


class ContractError(McqaError):
    """An operation was called outside its contract (bad span, bad state)."""


class ShapeError(McqaError):
    """Tensor widths or lengths do not match."""


class SequenceLengthError(McqaError):
    """An input sequence exceeds the encoder's maximum length."""


class ConfigError(McqaError):
    """Invalid configuration value or combination."""


class EvaluationError(McqaError):
    """Scores are unusable (NaN/Inf) at selection time."""


class TrainingDivergedError(McqaError):
    """Training loss became non-finite."""


class GradCheckTieError(McqaError):
    """The forward path runs through a (near-)tied max-pool or ReLU kink,
    making finite differences unreliable for this instance.  Callers should
    re-sample the instance."""


class CheckpointError(McqaError):
    """A checkpoint file is malformed, truncated, or incompatible."""
