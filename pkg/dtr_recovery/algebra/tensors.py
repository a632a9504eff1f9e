"""Tensor value types and the storage layout.

Order-3 tensors are ``numpy`` arrays of shape ``(n1, n2, n3)``.  The
canonical flat layout is slice-major with column-major slices, which is
exactly Fortran order: the zero-based offset of ``(i1, i2, i3)`` is
``i3*n1*n2 + i2*n1 + i1``.  Files and the mode-3 unfolding both use it.
"""

from __future__ import annotations

from typing import TypeAlias

import numpy as np
import numpy.typing as npt

from dtr_recovery.errors import ShapeError

DenseTensor: TypeAlias = npt.NDArray[np.float64]
ComplexTensor: TypeAlias = npt.NDArray[np.complex128]
Matrix: TypeAlias = npt.NDArray[np.float64] | npt.NDArray[np.complex128]


def as_dense(values: npt.ArrayLike, name: str = "tensor") -> DenseTensor:
    """Return ``values`` as a float64 order-3 tensor, validating its dims.

    Raises:
        ShapeError: if the array is not order 3 or a dimension is zero.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ShapeError(f"{name} must be an order-3 tensor with positive dims, got {arr.shape}.")
    return arr


def linear_offset(dims: tuple[int, int, int], i1: int, i2: int, i3: int) -> int:
    """Zero-based flat offset of element ``(i1, i2, i3)`` in the canonical layout."""
    n1, n2, n3 = dims
    if not (0 <= i1 < n1 and 0 <= i2 < n2 and 0 <= i3 < n3):
        raise ShapeError(f"Index {(i1, i2, i3)} out of range for dims {dims}.")
    return i3 * n1 * n2 + i2 * n1 + i1


def to_flat(t: np.ndarray) -> np.ndarray:
    """Flatten in canonical (slice-major, column-major) order."""
    return np.ravel(t, order="F")


def from_flat(values: npt.ArrayLike, dims: tuple[int, ...]) -> np.ndarray:
    """Inverse of :func:`to_flat`.

    Raises:
        ShapeError: if the value count does not match ``dims``.
    """
    flat = np.asarray(values)
    expected = int(np.prod(dims))
    if flat.ndim != 1 or flat.size != expected:
        raise ShapeError(f"Expected {expected} values for dims {dims}, got {flat.size}.")
    return np.reshape(flat, dims, order="F")
