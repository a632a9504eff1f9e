"""Tests for the error hierarchy and its exit codes."""

from __future__ import annotations

import pytest

from dtr_recovery.errors import (
    ConfigError,
    ContractError,
    DataIOError,
    NumericalError,
    ShapeError,
    TensorFormatError,
    check_same_dims,
)


@pytest.mark.parametrize(
    ("cls", "code"),
    [
        (ConfigError, 1),
        (ContractError, 1),
        (DataIOError, 2),
        (TensorFormatError, 2),
        (NumericalError, 3),
        (ShapeError, 3),
    ],
)
def test_exit_codes(cls: type, code: int) -> None:
    """Each error class maps to its documented exit code."""
    assert cls("x").exit_code == code


def test_dims_mismatch_is_not_a_usage_error() -> None:
    """Dimension mismatches exit differently from bad flags but remain ValueErrors."""
    with pytest.raises(ShapeError) as exc:
        check_same_dims(("a", (2, 2, 1)), ("b", (2, 2, 2)))
    assert isinstance(exc.value, ValueError)
    assert exc.value.exit_code != ConfigError("x").exit_code
    assert "a=(2, 2, 1)" in exc.value.detail
