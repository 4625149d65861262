class RejectedInputError(ValueError):
    """Raised when an operation receives inputs that violate its preconditions."""


class TrainingAbort(RuntimeError):
    """Raised when training produces a non-finite loss.

    Attributes:
        last_checkpoint: path of the most recent checkpoint written before the
            failure, or None if none was written yet.
    """

    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint
