"""Exception types shared across the toolkit."""


class GestureSynthError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(GestureSynthError, ValueError):
    """An argument violates a documented precondition."""


class ShapeError(InvalidInputError):
    """Array dimensions are inconsistent with the expected shapes."""


class InsufficientFramesError(InvalidInputError):
    """A pose sequence has too few frames for the requested operation."""


class InsufficientAudioError(InvalidInputError):
    """An audio clip is shorter than the minimum the operation needs."""


class PoseFileParseError(GestureSynthError, ValueError):
    """A pose text file is malformed; carries the offending line number."""

    def __init__(self, path, line_number, message):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class TrainingDivergedError(GestureSynthError, RuntimeError):
    """A non-finite loss was produced; carries the optimizer step index."""

    def __init__(self, step, message="non-finite loss"):
        self.step = step
        super().__init__(f"training diverged at step {step}: {message}")


class CheckpointFormatError(GestureSynthError, ValueError):
    """A checkpoint file has a bad magic string, version, or layout."""


class CompatibilityError(GestureSynthError, ValueError):
    """A checkpoint does not match the data or topology it is used with."""


class UndefinedMetricError(GestureSynthError, ValueError):
    """A metric has no defined value for the given inputs."""
