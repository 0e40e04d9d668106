"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class ContractError(ValueError):
    """An operation's precondition was violated."""


class DegenerateLatentError(ValueError):
    """A latent has zero norm, so cosine similarity is undefined."""


class ChunkingError(ValueError):
    """A sequence length is not compatible with the chunk size."""


class AlignmentError(ValueError):
    """Video and action chunk counts of a demo disagree."""


class ConfigurationError(ValueError):
    """Inputs do not match the configured network or run settings."""


class PlannerError(ValueError):
    """The expert planner cannot solve the requested instruction."""


class TraceValidityError(ValueError):
    """A gripper trace violates its width bounds."""


class SchemaError(KeyError):
    """No skill schema is defined for a task id."""


class FormatError(ValueError):
    """A file does not match its expected on-disk format."""


class DependencyError(RuntimeError):
    """A pipeline stage's required input artifact is missing."""
