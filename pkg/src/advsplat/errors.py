"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(PipelineError, ValueError):
    """A caller-supplied parameter violates an operation's contract."""


class AlignmentError(PipelineError, ValueError):
    """Two buffers that must share a shape do not."""


class ContractError(PipelineError, ValueError):
    """An input violates a model interface contract (shape, dtype, range)."""


class NoFramesError(PipelineError):
    """A source directory contains no readable frames."""


class FrameReadError(PipelineError):
    """A specific frame file could not be decoded. Message names the file."""


class ProviderError(PipelineError):
    """A segmentation provider call failed. Callers may retry."""


class NoObjectFoundError(PipelineError):
    """The segmentation provider returned no proposals for an image."""


class CompletenessError(PipelineError):
    """An export is missing required files.

    ``missing_ids`` lists the image ids without a usable source file.
    """

    def __init__(self, message: str, missing_ids=()):
        super().__init__(message)
        self.missing_ids = list(missing_ids)


class OrphanRenderError(PipelineError):
    """A render file names an image id absent from the split assignment."""


class DuplicateRenderError(PipelineError):
    """Two render files resolve to the same image id."""


class BackendUnavailableError(PipelineError):
    """A model adapter's backend (library or weights) is not available."""


class CapabilityError(PipelineError):
    """A model adapter cannot provide input gradients."""
