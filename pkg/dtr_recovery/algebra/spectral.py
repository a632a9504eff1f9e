"""Packed real half-spectrum along mode 3.

A real tube of length ``n3`` has a Hermitian DFT, so its spectrum is fully
described by ``n3`` real numbers.  The packing follows FFTPACK's ``rfft``
order::

    [Re X0, Re X1, Im X1, Re X2, Im X2, ..., (Re X_{n3/2} if n3 is even)]

Real tensors in this layout stand in for complex Fourier-side factors, so a
gradient method can optimize them while the data-domain result stays real.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from dtr_recovery.algebra.tproduct import idft_mode3
from dtr_recovery.errors import ShapeError


def half_length(n3: int) -> int:
    """Number of non-redundant complex frequencies for a real tube."""
    return n3 // 2 + 1


def unpack(p: np.ndarray) -> np.ndarray:
    """Packed real tensor ``(..., n3)`` -> half spectrum ``(..., n3//2 + 1)``."""
    n3 = p.shape[-1]
    h = np.zeros(p.shape[:-1] + (half_length(n3),), dtype=np.complex128)
    h[..., 0] = p[..., 0]
    pairs = (n3 - 1) // 2
    if pairs:
        h[..., 1 : pairs + 1] = p[..., 1 : 2 * pairs : 2] + 1j * p[..., 2 : 2 * pairs + 1 : 2]
    if n3 % 2 == 0 and n3 > 1:
        h[..., -1] = p[..., -1]
    return h


def pack(h: np.ndarray, n3: int) -> np.ndarray:
    """Inverse of :func:`unpack`; imaginary parts of real-only slots are dropped."""
    if h.shape[-1] != half_length(n3):
        raise ShapeError(f"Half spectrum of length {h.shape[-1]} does not match n3={n3}.")
    p = np.zeros(h.shape[:-1] + (n3,))
    p[..., 0] = h[..., 0].real
    pairs = (n3 - 1) // 2
    if pairs:
        p[..., 1 : 2 * pairs : 2] = h[..., 1 : pairs + 1].real
        p[..., 2 : 2 * pairs + 1 : 2] = h[..., 1 : pairs + 1].imag
    if n3 % 2 == 0 and n3 > 1:
        p[..., -1] = h[..., -1].real
    return p


def hermitian_full(h: np.ndarray, n3: int) -> np.ndarray:
    """Extend a half spectrum to the full conjugate-symmetric spectrum."""
    full = np.zeros(h.shape[:-1] + (n3,), dtype=np.complex128)
    m = half_length(n3)
    full[..., :m] = h
    for k in range(m, n3):
        full[..., k] = np.conj(h[..., n3 - k])
    return full


def pack_spectrum(t: np.ndarray) -> np.ndarray:
    """Packed spectrum of a real tensor (forward DFT along mode 3)."""
    return pack(np.fft.rfft(t, axis=2), t.shape[2])


def unpack_spectrum(p: np.ndarray) -> np.ndarray:
    """Real tensor whose packed spectrum is ``p`` (inverse DFT along mode 3)."""
    n3 = p.shape[2]
    return idft_mode3(hermitian_full(unpack(p), n3)).real


@lru_cache(maxsize=64)
def _inverse_matrix(n3: int) -> np.ndarray:
    eye = np.eye(n3)
    cols = [np.fft.irfft(unpack(eye[j]), n=n3) for j in range(n3)]
    out = np.stack(cols, axis=1)
    out.setflags(write=False)
    return out


def inverse_matrix(n3: int) -> np.ndarray:
    """Real ``n3 x n3`` matrix ``R`` with ``unpack_spectrum(p) == mode3_product(p, R)``."""
    return _inverse_matrix(n3)


def packed_identity(n: int, n3: int) -> np.ndarray:
    """Packed tensor whose every Fourier-side slice is ``I_n``."""
    h = np.zeros((n, n, half_length(n3)), dtype=np.complex128)
    h[:, :, :] = np.eye(n)[:, :, np.newaxis]
    return pack(h, n3)
