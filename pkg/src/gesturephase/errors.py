"""Exception taxonomy. The CLI maps these onto exit codes:

1 = usage / configuration problems
2 = data problems (parsing, shapes, annotation conflicts)
3 = numerical failures (divergence, gradient-check breach)
"""


class GesturePhaseError(Exception):
    """Base class for all package errors."""


class ConfigError(GesturePhaseError):
    """Invalid or unknown configuration (bad value, unknown key, infeasible setup)."""


class DataError(GesturePhaseError):
    """Base for malformed input data."""


class PoseParseError(DataError):
    """Unparseable pose record; carries the 1-based line number."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class FrameShapeError(DataError):
    """A frame carries the wrong number of keypoints."""


class FrameGapError(DataError):
    """Frame indices for a subject are not contiguous."""


class DegeneratePoseError(DataError):
    """Pose normalization impossible (zero scale distance)."""


class AnnotationError(DataError):
    """Invalid stroke annotations (overlap, bad interval, unknown subject)."""


class SequenceTooShortError(DataError):
    """Sequence shorter than one window."""


class GraphError(ConfigError):
    """Invalid skeleton graph (disconnected, bad center, bad edge)."""


class CheckpointError(GesturePhaseError):
    """Checkpoint unreadable or incompatible with the current model."""


class NumericalError(GesturePhaseError):
    """Base for numerical failures."""


class DivergenceError(NumericalError):
    """Non-finite loss encountered during training."""


class GradientCheckError(NumericalError):
    """Analytic gradients disagree with finite differences beyond tolerance."""
