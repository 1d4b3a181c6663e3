"""Exception hierarchy for the engine."""


class PoseflowError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(PoseflowError):
    """Malformed or truncated on-disk data (tensor files, images, configs)."""


class ContractError(PoseflowError):
    """An operation was called with inputs violating its preconditions."""


class ConfigError(PoseflowError):
    """Invalid or inconsistent configuration."""


class GraphError(PoseflowError):
    """Pipeline graph is not a well-formed linear chain."""


class ChannelClosed(PoseflowError):
    """Send attempted on a closed channel."""


class BackendError(PoseflowError):
    """Inference backend failed or returned inconsistent results."""


class PipelineError(PoseflowError):
    """A running pipeline aborted.

    Carries the name of the failing operator and, when available, the
    partial run statistics assembled after all workers were joined.
    """

    def __init__(self, message, op_name=None, stats=None):
        super().__init__(message)
        self.op_name = op_name
        self.stats = stats
