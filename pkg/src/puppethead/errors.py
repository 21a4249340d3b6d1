"""Exception types shared across the pipeline.

Plain ``ValueError`` is used for invalid arguments; the classes here cover
failure modes the CLI maps to distinct exit codes.
"""


class PipelineError(Exception):
    """Base class for runtime failures in the animation pipeline."""


class EmptyForegroundError(PipelineError):
    """A render produced no foreground pixels (mesh fully off-screen)."""


class MissingDependencyError(PipelineError):
    """A required artifact (checkpoint, dataset) is missing.

    ``missing`` lists the absent paths so callers can report all of them.
    """

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = tuple(str(m) for m in missing)


class NumericFailureError(PipelineError):
    """Non-finite values appeared where finite ones are required."""


class TrainingFailureError(PipelineError):
    """Training diverged; ``last_good_checkpoint`` points at the rescue file."""

    def __init__(self, message, last_good_checkpoint=None):
        super().__init__(message)
        self.last_good_checkpoint = last_good_checkpoint
