"""Exception taxonomy shared by all shapelift modules.

The CLI maps these onto process exit codes: invalid input or config -> 1,
numerical failure -> 2.
"""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition (shape, range, dtype)."""


class InvalidSpecError(InvalidInputError):
    """A shape specification carries parameters outside their valid range."""


class FileFormatError(InvalidInputError):
    """A file does not parse as the format its magic or extension promises."""


class NumericalFailureError(RuntimeError):
    """An iterative numerical procedure diverged or failed to converge."""
