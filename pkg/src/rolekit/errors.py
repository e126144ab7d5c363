"""Shared exception types."""


class RolekitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(RolekitError):
    """A record or argument violates a schema invariant."""


class ConfigError(RolekitError):
    """Invalid or inconsistent configuration."""


class TemplateError(RolekitError):
    """Prompt template rendering failed (unbound placeholder etc.)."""


class TransportError(RolekitError):
    """HTTP/network failure that survived all retries."""


class ContentError(RolekitError):
    """Upstream model refused or returned an unusable payload."""


class IntegrityError(RolekitError):
    """Data inconsistency, e.g. embedding dimension mismatch."""


class StageError(RolekitError):
    """A pipeline stage could not produce any usable output."""


class SessionNotFoundError(RolekitError):
    """Unknown chat session id."""
