"""Exception types shared across the package.

Every failure mode that callers are expected to branch on gets its own
class; generic programming errors keep their builtin types.
"""

from __future__ import annotations

__all__ = [
    "MicrolmError",
    "DimensionError",
    "ConfigError",
    "ContainerFormatError",
    "ContainerIntegrityError",
    "TruncatedPayloadError",
    "ContextOverflowError",
    "DomainError",
    "TranscriptError",
    "CloudTransportError",
    "CloudTimeoutError",
    "CloudProtocolError",
    "ProvenanceError",
    "IncompleteTimelineError",
]


class MicrolmError(Exception):
    """Base class for package-specific failures."""


class DimensionError(MicrolmError, ValueError):
    """Operands have incompatible or malformed shapes."""


class ConfigError(MicrolmError, ValueError):
    """A configuration violates a structural constraint."""


class ContainerFormatError(MicrolmError, ValueError):
    """Weights container has a bad magic string or unsupported version."""


class ContainerIntegrityError(MicrolmError, ValueError):
    """Container contents disagree with the declared manifest."""


class TruncatedPayloadError(MicrolmError, OSError):
    """Container payload ended before the manifest said it would."""


class ContextOverflowError(MicrolmError, ValueError):
    """Sequence length would exceed the model's maximum context."""


class DomainError(MicrolmError, ValueError):
    """A numeric argument is outside the function's domain."""


class TranscriptError(MicrolmError, ValueError):
    """Chat transcript violates the alternation or content rules."""


class CloudTransportError(MicrolmError, ConnectionError):
    """The continuation request failed at the network level."""

    def __init__(self, message: str, partial_text: str = ""):
        super().__init__(message)
        self.partial_text = partial_text


class CloudTimeoutError(CloudTransportError):
    """The continuation request timed out; any streamed text is preserved."""


class CloudProtocolError(MicrolmError, ValueError):
    """The cloud endpoint answered with a non-success status or bad frame."""

    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code


class ProvenanceError(MicrolmError, ValueError):
    """An aggregate was asked to treat an unknown flag as a definite one."""


class IncompleteTimelineError(MicrolmError, ValueError):
    """A timeline is missing an event required by the requested metric."""
