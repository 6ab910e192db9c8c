"""Exception hierarchy shared across the package."""


class FairbaryError(Exception):
    """Base class for all package-specific errors."""


class DomainError(FairbaryError, ValueError):
    """An input lies outside the documented domain of an operation."""


class ConfigError(FairbaryError, ValueError):
    """A configuration value is invalid or inconsistent."""


class InfeasibilityError(FairbaryError, ValueError):
    """The constraint set is empty for the given parameters."""


class SchemaError(FairbaryError, ValueError):
    """A file or record does not match the expected schema."""


class SidecarError(FairbaryError, ValueError):
    """A ground-truth sidecar file is malformed."""
