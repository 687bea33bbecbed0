"""Exception hierarchy shared by every module of the package."""


class AutoconvError(Exception):
    """Base class for all package errors."""


class DomainError(AutoconvError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class ShapeError(AutoconvError, ValueError):
    """A coefficient vector has the wrong length."""


class DegenerateError(AutoconvError, ValueError):
    """Normalization requested for a vector with zero total mass."""


class RangeError(AutoconvError, ValueError):
    """A window index lies outside the admissible range."""


class CursorError(AutoconvError, ValueError):
    """A chunk cursor does not describe a valid sub-enumeration."""


class CheckpointError(AutoconvError):
    """A checkpoint cannot be resumed (corrupt, wrong version or wrong run)."""
