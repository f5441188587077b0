"""Exception hierarchy shared by all geovec modules."""


class GeovecError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(GeovecError):
    """Input data violates a documented invariant."""


class FormatError(GeovecError):
    """A serialized stream does not match the expected file format."""


class CorruptionError(FormatError):
    """A stream has a valid header but a damaged or truncated body."""


class ConfigError(GeovecError):
    """A parameter combination is rejected before any work is done."""


class DomainError(GeovecError):
    """An operation was applied to a value outside its mathematical domain."""


class StorageError(GeovecError):
    """An underlying I/O operation failed part-way through."""


class EvaluationError(GeovecError):
    """An evaluation run cannot produce a meaningful result."""


class ResourceError(GeovecError):
    """The host lacks the resources (typically memory) for the requested run."""
