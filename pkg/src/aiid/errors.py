class AiidError(Exception):
    """Base class for library errors."""


class ValidationError(AiidError, ValueError):
    """An argument violates an operation's precondition."""


class DimensionError(ValidationError):
    """Alphabet sizes or matrix dimensions do not match."""


class CapacityError(AiidError):
    """A configured size cap would be exceeded."""


class CapabilityError(AiidError):
    """The object lacks the structure needed for the requested computation."""


class ProtocolError(AiidError):
    """The two parties of a protocol disagree on shared state."""
