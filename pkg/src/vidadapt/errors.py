"""Exception types shared across the package."""


class VidadaptError(Exception):
    """Base class for all package errors."""


class ContractViolation(VidadaptError, ValueError):
    """An argument violates a documented precondition or invariant."""


class ConfigurationError(VidadaptError, ValueError):
    """Inconsistent, out-of-range, or unreadable configuration/input."""


class SceneSpecError(ConfigurationError):
    """A synthetic scene specification is invalid."""


class EvaluationError(VidadaptError, RuntimeError):
    """Evaluation cannot proceed, e.g. a prediction is missing for an annotated frame."""


class ProtocolError(VidadaptError, RuntimeError):
    """Base class for external-segmenter protocol failures."""


class ProtocolTimeout(ProtocolError):
    """The external segmenter did not respond within the configured timeout."""


class MalformedResponse(ProtocolError):
    """A response file is missing, truncated, or has an invalid header."""


class NormalizationError(MalformedResponse):
    """A returned probability volume fails the range/normalization check."""
