"""Mode-3 algebra: unfolding, mode-3 product, DFT, face-wise and t-products.

Conventions:

- The forward DFT along mode 3 is unnormalized, ``F[j, k] = exp(-2*pi*i*j*k/n3)``;
  the inverse carries the ``1/n3`` factor.  Parseval therefore reads
  ``||dft(t)||_F**2 == n3 * ||t||_F**2``.
- Tubal rank uses a relative cutoff ``tol * sigma_max`` over the whole
  transformed tensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import structlog
from scipy.linalg import LinAlgError, svd

from dtr_recovery.algebra.tensors import ComplexTensor, DenseTensor, Matrix
from dtr_recovery.config import settings
from dtr_recovery.errors import NumericalError, ShapeError, check_same_dims

logger = structlog.get_logger(__name__)

IMAG_RESIDUE_TOL = 1e-10


def mode3_unfold(t: np.ndarray) -> np.ndarray:
    """Mode-3 unfolding: an ``n3 x n1*n2`` matrix.

    Column ``j = i1 + i2*n1`` (zero-based) of row ``i3`` holds ``t[i1, i2, i3]``.
    """
    n1, n2, n3 = t.shape
    return np.reshape(t, (n1 * n2, n3), order="F").T


def mode3_fold(m: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`mode3_unfold`.

    Raises:
        ShapeError: if ``m`` is not ``n3 x n1*n2``.
    """
    n1, n2, n3 = dims
    if m.shape != (n3, n1 * n2):
        raise ShapeError(f"Cannot fold a {m.shape} matrix into dims {dims}.")
    return np.reshape(m.T, (n1, n2, n3), order="F")


def mode3_product(t: np.ndarray, a: Matrix) -> np.ndarray:
    """Mode-3 tensor-matrix product ``t x_3 a`` for ``a`` of shape ``J x n3``.

    Raises:
        ShapeError: if the column count of ``a`` differs from ``n3``.
    """
    if a.ndim != 2 or a.shape[1] != t.shape[2]:
        raise ShapeError(
            f"Mode-3 product needs a J x {t.shape[2]} matrix, got {a.shape}."
        )
    return np.tensordot(t, a, axes=([2], [1]))


def dft_matrix(n: int) -> np.ndarray:
    """The unnormalized ``n x n`` DFT matrix."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def dft_mode3(t: np.ndarray) -> ComplexTensor:
    """DFT of every mode-3 tube (equals ``mode3_product(t, dft_matrix(n3))``)."""
    return np.fft.fft(t, axis=2)


def idft_mode3(c: np.ndarray) -> ComplexTensor:
    """Inverse of :func:`dft_mode3`, scaled by ``1/n3``."""
    return np.fft.ifft(c, axis=2)


def facewise_product(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Face-wise product: slice ``k`` of the result is ``x[:, :, k] @ y[:, :, k]``.

    Works for real and complex operands.

    Raises:
        ShapeError: if inner dims or slice counts disagree.
    """
    if x.ndim != 3 or y.ndim != 3 or x.shape[1] != y.shape[0] or x.shape[2] != y.shape[2]:
        raise ShapeError(f"Face-wise product undefined for {x.shape} and {y.shape}.")
    return np.matmul(x.transpose(2, 0, 1), y.transpose(2, 0, 1)).transpose(1, 2, 0)


def t_product(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    """Tensor-tensor product ``a * b`` computed in the Fourier domain.

    Raises:
        ShapeError: if inner dims or ``n3`` disagree.
        NumericalError: if the inverse transform leaves an imaginary residue
            above tolerance.
    """
    c = idft_mode3(facewise_product(dft_mode3(a), dft_mode3(b)))
    residue = float(np.linalg.norm(c.imag))
    scale = max(float(np.linalg.norm(c.real)), 1.0)
    if residue > IMAG_RESIDUE_TOL * scale:
        raise NumericalError(f"t-product left an imaginary residue of {residue:.3e}.")
    return np.ascontiguousarray(c.real)


def tube_identity(n: int, n3: int) -> DenseTensor:
    """Identity of the t-product: first frontal slice ``I_n``, the rest zero."""
    out = np.zeros((n, n, n3))
    out[:, :, 0] = np.eye(n)
    return out


@dataclass(frozen=True)
class SliceSvd:
    """Thin SVD of every frontal slice.

    Attributes:
        u: Left singular vectors, shape ``(n1, m, n3)``.
        s: Singular values, shape ``(m, n3)``, nonincreasing per slice.
        vh: Conjugate-transposed right singular vectors, shape ``(m, n2, n3)``.
    """

    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray

    def reconstruct(self, s: np.ndarray | None = None) -> np.ndarray:
        """Rebuild the slices, optionally with replacement singular values."""
        sigma = self.s if s is None else s
        scaled = self.u * sigma[np.newaxis, :, :]
        return facewise_product(scaled, self.vh)


def _svd_slice(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    try:
        return svd(mat, full_matrices=False, lapack_driver="gesdd")
    except LinAlgError:
        logger.warning("svd_fallback", driver="gesvd", shape=mat.shape)
    try:
        return svd(mat, full_matrices=False, lapack_driver="gesvd")
    except LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc


def slice_svd(c: np.ndarray) -> SliceSvd:
    """Per-slice thin SVD of a real or complex order-3 tensor.

    Raises:
        NumericalError: if the SVD fails to converge or the input is not finite.
    """
    if not np.all(np.isfinite(c)):
        raise NumericalError("slice_svd received non-finite values.")
    n1, n2, n3 = c.shape
    m = min(n1, n2)
    dtype = np.result_type(c.dtype, np.float64)
    u = np.empty((n1, m, n3), dtype=dtype)
    s = np.empty((m, n3))
    vh = np.empty((m, n2, n3), dtype=dtype)
    for k in range(n3):
        u[:, :, k], s[:, k], vh[:, :, k] = _svd_slice(c[:, :, k])
    return SliceSvd(u=u, s=s, vh=vh)


def tubal_rank(a: DenseTensor, tol: float | None = None) -> int:
    """Tubal rank: the largest numerical rank over the Fourier-domain slices.

    A singular value counts when it exceeds ``tol`` times the largest singular
    value of the whole transformed tensor; ``tol`` defaults to
    ``DTR_TUBAL_RANK_TOL``.

    Raises:
        ShapeError: if ``tol`` is not positive.
    """
    if tol is None:
        tol = settings.TUBAL_RANK_TOL
    if tol <= 0:
        raise ShapeError(f"tubal_rank tolerance must be positive, got {tol}.")
    s = slice_svd(dft_mode3(a)).s
    s_max = float(s.max(initial=0.0))
    if s_max == 0.0:
        return 0
    return int(np.max(np.sum(s > tol * s_max, axis=0)))


def frobenius_norm(t: np.ndarray) -> float:
    """Frobenius norm (square root of the sum of squared magnitudes)."""
    return float(np.sqrt(np.sum(np.abs(t) ** 2)))


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise product.

    Raises:
        ShapeError: if the dims differ.
    """
    check_same_dims(("a", a.shape), ("b", b.shape))
    return a * b
