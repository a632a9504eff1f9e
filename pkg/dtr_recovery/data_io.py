"""Tensor files, masks, normalization, synthetic data, folding and image export.

Tensor file format (``.dtt``), all integers little-endian::

    bytes 0-3   ASCII "DTT1"
    byte  4     order (3 or 4)
    then        order x uint32 dims
    then        prod(dims) x float32 values, slice-major / column-major

Files store float32; loading widens to float64.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, TypeAlias

import numpy as np
import numpy.typing as npt
import structlog
from skimage.io import imsave

from dtr_recovery.algebra.tensors import DenseTensor, from_flat, to_flat
from dtr_recovery.algebra.tproduct import t_product
from dtr_recovery.errors import ConfigError, DataIOError, ShapeError, TensorFormatError

logger = structlog.get_logger(__name__)

MaskTensor: TypeAlias = npt.NDArray[np.float64]

MAGIC = b"DTT1"
_HEADER = len(MAGIC) + 1
_MAX_ELEMENTS = 2**31 - 1


# ----------------------------------------------------------------------
# Tensor files
# ----------------------------------------------------------------------


def encode_tensor(t: np.ndarray) -> bytes:
    """Serialize an order-3 or order-4 tensor to ``.dtt`` bytes."""
    if t.ndim not in (3, 4):
        raise ShapeError(f"Only order-3 and order-4 tensors can be saved, got order {t.ndim}.")
    dims = np.asarray(t.shape, dtype="<u4")
    values = np.asarray(to_flat(t), dtype="<f4")
    return MAGIC + bytes([t.ndim]) + dims.tobytes() + values.tobytes()


def decode_tensor(raw: bytes) -> np.ndarray:
    """Parse ``.dtt`` bytes.

    Raises:
        TensorFormatError: on a bad magic, unsupported order, zero or
            oversized dims, or a payload of the wrong length.
    """
    if len(raw) < _HEADER:
        raise TensorFormatError("Tensor file is truncated (no header).")
    if raw[:4] != MAGIC:
        raise TensorFormatError(f"Bad magic {raw[:4]!r}; expected {MAGIC!r}.")
    order = raw[4]
    if order not in (3, 4):
        raise TensorFormatError(f"Unsupported tensor order {order}.")
    dims_end = _HEADER + 4 * order
    if len(raw) < dims_end:
        raise TensorFormatError("Tensor file is truncated (incomplete dims).")
    dims = tuple(int(d) for d in np.frombuffer(raw[_HEADER:dims_end], dtype="<u4"))
    count = 1
    for d in dims:
        count *= d
    if min(dims) < 1 or count > _MAX_ELEMENTS:
        raise TensorFormatError(f"Invalid tensor dims {dims}.")
    payload = raw[dims_end:]
    if len(payload) != 4 * count:
        raise TensorFormatError(
            f"Tensor payload has {len(payload)} bytes; dims {dims} need {4 * count}."
        )
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return from_flat(values, dims)


def save_tensor(t: np.ndarray, path: str | Path) -> None:
    """Write ``t`` to ``path`` in ``.dtt`` format.

    Raises:
        DataIOError: if the file cannot be written.
    """
    data = encode_tensor(t)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise DataIOError(f"Cannot write {path}: {exc}") from exc
    logger.debug("tensor_saved", path=str(path), dims=t.shape)


def load_tensor(path: str | Path) -> np.ndarray:
    """Read a ``.dtt`` file.

    Raises:
        DataIOError: if the file cannot be read.
        TensorFormatError: if its contents are malformed.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataIOError(f"Cannot read {path}: {exc}") from exc
    return decode_tensor(raw)


# ----------------------------------------------------------------------
# Masks
# ----------------------------------------------------------------------


def _observed_count(sr: float, total: int) -> int:
    if not 0.0 < sr <= 1.0:
        raise ConfigError(f"Sampling rate must be in (0, 1], got {sr}.")
    # round half up
    return int(np.floor(sr * total + 0.5))


def gen_random_mask(dims: tuple[int, int, int], sr: float, seed: int) -> MaskTensor:
    """Random missing: exactly ``round(sr * N)`` observed entries, drawn without replacement."""
    total = int(np.prod(dims))
    count = _observed_count(sr, total)
    flat = np.zeros(total)
    flat[np.random.default_rng(seed).choice(total, size=count, replace=False)] = 1.0
    return from_flat(flat, dims)


def gen_tube_mask(dims: tuple[int, int, int], sr: float, seed: int) -> MaskTensor:
    """Tube missing: ``round(sr * n1 * n2)`` spatial positions observed across every band."""
    n1, n2, n3 = dims
    count = _observed_count(sr, n1 * n2)
    spatial = np.zeros(n1 * n2)
    spatial[np.random.default_rng(seed).choice(n1 * n2, size=count, replace=False)] = 1.0
    plane = np.reshape(spatial, (n1, n2), order="F")
    return np.repeat(plane[:, :, np.newaxis], n3, axis=2)


def sampling_rate(m: MaskTensor) -> float:
    return float(np.count_nonzero(m)) / m.size


def check_mask(m: np.ndarray) -> None:
    """Raise :class:`ConfigError` unless every entry is exactly 0.0 or 1.0."""
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ConfigError("Mask must be binary (entries 0.0 or 1.0).")


def apply_mask(o: DenseTensor, m: MaskTensor) -> DenseTensor:
    """Observation with unobserved entries zeroed."""
    if o.shape != m.shape:
        raise ShapeError(f"Mask dims {m.shape} do not match data dims {o.shape}.")
    return o * m


# ----------------------------------------------------------------------
# Normalization
# ----------------------------------------------------------------------


def normalize_bands(t: DenseTensor) -> tuple[DenseTensor, np.ndarray]:
    """Map every frontal slice affinely onto ``[0, 1]``.

    Returns:
        The normalized tensor and an ``(n3, 2)`` array of per-band ``(min, max)``.
        Constant bands map to zeros.
    """
    lo = t.min(axis=(0, 1))
    hi = t.max(axis=(0, 1))
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (t - lo) / safe, 0.0)
    return out, np.stack([lo, hi], axis=1)


def denormalize_bands(t: DenseTensor, bounds: np.ndarray) -> DenseTensor:
    """Inverse of :func:`normalize_bands` given the stored ``(min, max)`` pairs."""
    if bounds.shape != (t.shape[2], 2):
        raise ShapeError(f"Bounds {bounds.shape} do not match {t.shape[2]} bands.")
    lo, hi = bounds[:, 0], bounds[:, 1]
    return t * (hi - lo) + lo


# ----------------------------------------------------------------------
# Synthetic data
# ----------------------------------------------------------------------


def synth_low_tubal_rank(dims: tuple[int, int, int], r: int, seed: int) -> DenseTensor:
    """``G * H`` for seeded nonnegative factors, scaled to a maximum of 1.

    The global scale keeps the tubal rank at ``r``; per-band min-max
    normalization would add a constant per slice and raise it.
    """
    n1, n2, n3 = dims
    if not 1 <= r <= min(n1, n2):
        raise ConfigError(f"Tubal rank must be in [1, {min(n1, n2)}], got {r}.")
    rng = np.random.default_rng(seed)
    g = rng.uniform(0.0, 1.0, size=(n1, r, n3))
    h = rng.uniform(0.0, 1.0, size=(r, n2, n3))
    x = t_product(g, h)
    return x / x.max()


def synth_smooth(dims: tuple[int, int, int], seed: int, blobs: int = 6) -> DenseTensor:
    """Smooth multi-band volume: Gaussian blobs with smoothly varying band weights."""
    n1, n2, n3 = dims
    rng = np.random.default_rng(seed)
    rows = np.arange(n1)[:, np.newaxis] / max(n1 - 1, 1)
    cols = np.arange(n2)[np.newaxis, :] / max(n2 - 1, 1)
    bands = np.arange(n3) / max(n3, 1)
    x = np.zeros(dims)
    for _ in range(blobs):
        cy, cx = rng.uniform(0.0, 1.0, size=2)
        width = rng.uniform(0.1, 0.3)
        plane = np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2 * width**2))
        freq, phase = rng.uniform(0.5, 2.0), rng.uniform(0.0, 2 * np.pi)
        signature = 0.5 + 0.5 * np.sin(2 * np.pi * freq * bands + phase)
        x += plane[:, :, np.newaxis] * signature[np.newaxis, np.newaxis, :]
    return normalize_bands(x)[0]


# ----------------------------------------------------------------------
# Order-4 folding
# ----------------------------------------------------------------------


def fold4(t: np.ndarray) -> DenseTensor:
    """Merge modes 3 and 4 of ``(n1, n2, n3, n4)``; mode 3 varies fastest."""
    if t.ndim != 4:
        raise ShapeError(f"fold4 expects an order-4 tensor, got order {t.ndim}.")
    n1, n2, n3, n4 = t.shape
    return np.reshape(t, (n1, n2, n3 * n4), order="F")


def unfold4(t: DenseTensor, n3: int, n4: int) -> np.ndarray:
    """Inverse of :func:`fold4`."""
    n1, n2, merged = t.shape
    if merged != n3 * n4:
        raise ShapeError(f"Merged dim {merged} is not {n3} x {n4}.")
    return np.reshape(t, (n1, n2, n3, n4), order="F")


# ----------------------------------------------------------------------
# Export
# ----------------------------------------------------------------------


def to_bytes(values: np.ndarray) -> np.ndarray:
    """Clamp to ``[0, 1]`` and scale to 8-bit with round-half-up."""
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def export_image(t: DenseTensor, bands: tuple[int, int, int], path: str | Path) -> None:
    """Write a pseudo-color binary PPM from three zero-based band indices.

    Raises:
        ConfigError: if a band index is out of range.
        DataIOError: if the image cannot be written.
    """
    n3 = t.shape[2]
    if len(bands) != 3 or any(not 0 <= b < n3 for b in bands):
        raise ConfigError(f"Band indices {bands} invalid for {n3} bands.")
    rgb = to_bytes(t[:, :, list(bands)])
    try:
        imsave(str(path), rgb, check_contrast=False, extension=".ppm")
    except (OSError, ValueError) as exc:
        raise DataIOError(f"Cannot write image {path}: {exc}") from exc


def write_loss_csv(history: Iterable[tuple[int, float]], path: str | Path) -> None:
    """Write an ``iteration,loss`` CSV."""
    try:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "loss"])
            for iteration, loss in history:
                writer.writerow([iteration, repr(float(loss))])
    except OSError as exc:
        raise DataIOError(f"Cannot write {path}: {exc}") from exc
