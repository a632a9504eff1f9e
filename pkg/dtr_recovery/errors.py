"""Exception hierarchy shared by the library and the command-line entry point.

Every error carries a human-readable ``detail`` and the process
``exit_code`` the CLI reports for it:

- 1 -- usage errors (bad flags, invalid configuration)
- 2 -- I/O errors (missing files, malformed tensor files)
- 3 -- numerical failures (non-finite values, SVD failure, failed checks)
  and dimension mismatches
"""

from __future__ import annotations


class DtrError(Exception):
    """Base class for all dtr-recovery errors.

    Parameters:
        detail: Description of what went wrong.
    """

    exit_code: int = 1

    def __init__(self, detail: str) -> None:
        super().__init__(detail)
        self.detail = detail


class UsageError(DtrError):
    """The caller asked for something that cannot be done as stated."""

    exit_code = 1


class ShapeError(DtrError, ValueError):
    """Tensor or matrix dimensions are incompatible."""

    exit_code = 3


class ContractError(UsageError):
    """An operation's precondition is violated (e.g. a non-scalar loss)."""


class ConfigError(UsageError):
    """A configuration object or flag combination is invalid."""


class DataIOError(DtrError):
    """A file could not be read or written."""

    exit_code = 2


class TensorFormatError(DataIOError):
    """A tensor file is malformed (bad magic, truncated, bad dimensions)."""


class NumericalError(DtrError):
    """A computation produced non-finite values or failed to converge."""

    exit_code = 3


def check_same_dims(*named: tuple[str, tuple[int, ...]]) -> None:
    """Raise :class:`ShapeError` unless all named shapes are identical.

    Parameters:
        named: ``(name, shape)`` pairs to compare.
    """
    shapes = {name: tuple(shape) for name, shape in named}
    if len(set(shapes.values())) > 1:
        listing = ", ".join(f"{name}={shape}" for name, shape in shapes.items())
        raise ShapeError(f"Dimension mismatch: {listing}.")
