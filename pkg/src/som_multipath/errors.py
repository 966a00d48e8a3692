"""Exception types shared across the package.

All of these derive from ``ValueError`` (or ``OSError`` for I/O) so generic
callers can catch broad categories, while tests and the CLI can distinguish
the failure kind.
"""


class SomMultipathError(Exception):
    """Base class for package-specific failures."""


class ConfigurationError(SomMultipathError, ValueError):
    """A config object or config file is invalid."""


class GeometryError(SomMultipathError, ValueError):
    """A pose or scene violates a geometric precondition."""


class ShapeError(SomMultipathError, ValueError):
    """An array input has the wrong shape for the requested operation."""


class DomainError(SomMultipathError, ValueError):
    """A scalar argument is outside the operation's domain."""


class SequenceLengthError(SomMultipathError, ValueError):
    """A token sequence exceeds the configured maximum length."""


class CompatibilityError(SomMultipathError, ValueError):
    """A checkpoint and a dataset (or config) do not fit together."""


class OutputExistsError(SomMultipathError, OSError):
    """Refusing to overwrite an existing output without an explicit force."""
