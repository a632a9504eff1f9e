"""Tests for tensor files, masks, normalization, synthesis and export."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from skimage.io import imread

from dtr_recovery.algebra import tubal_rank
from dtr_recovery.data_io import (
    apply_mask,
    check_mask,
    decode_tensor,
    denormalize_bands,
    encode_tensor,
    export_image,
    fold4,
    gen_random_mask,
    gen_tube_mask,
    load_tensor,
    normalize_bands,
    sampling_rate,
    save_tensor,
    synth_low_tubal_rank,
    synth_smooth,
    to_bytes,
    unfold4,
    write_loss_csv,
)
from dtr_recovery.errors import ConfigError, DataIOError, ShapeError, TensorFormatError


def _example_tensor() -> np.ndarray:
    t = np.zeros((2, 2, 2))
    t[:, :, 0] = [[1, 3], [2, 4]]
    t[:, :, 1] = [[5, 7], [6, 8]]
    return t


# ---------------------------------------------------------------------------
# Tensor files
# ---------------------------------------------------------------------------


def test_file_layout_of_example_tensor() -> None:
    """The 2x2x2 example is 49 bytes: magic, order, dims, then values in layout order."""
    raw = encode_tensor(_example_tensor())
    assert len(raw) == 4 + 1 + 12 + 32
    assert raw[:4] == b"DTT1"
    assert raw[4] == 3
    assert np.array_equal(np.frombuffer(raw[5:17], dtype="<u4"), [2, 2, 2])
    assert np.array_equal(np.frombuffer(raw[17:], dtype="<f4"), np.arange(1, 9))


def test_save_load_roundtrip(tmp_path: Path, rng: np.random.Generator) -> None:
    """Roundtrip is exact at float32 precision, for order 3 and 4."""
    for dims in [(3, 4, 5), (2, 3, 2, 2)]:
        t = rng.standard_normal(dims)
        path = tmp_path / "t.dtt"
        save_tensor(t, path)
        assert np.array_equal(load_tensor(path), t.astype(np.float32).astype(np.float64))


def test_decode_rejects_malformed_files() -> None:
    """Bad magic, bad order, truncation and zero dims are format errors."""
    good = encode_tensor(_example_tensor())
    with pytest.raises(TensorFormatError):
        decode_tensor(b"XXXX" + good[4:])
    with pytest.raises(TensorFormatError):
        decode_tensor(good[:4] + bytes([5]) + good[5:])
    with pytest.raises(TensorFormatError):
        decode_tensor(good[:-1])
    with pytest.raises(TensorFormatError):
        decode_tensor(good[:3])
    zero_dim = good[:5] + np.array([0, 2, 2], dtype="<u4").tobytes()
    with pytest.raises(TensorFormatError):
        decode_tensor(zero_dim)
    huge = good[:5] + np.array([2**16, 2**16, 2], dtype="<u4").tobytes()
    with pytest.raises(TensorFormatError):
        decode_tensor(huge)


def test_load_missing_file_is_io_error(tmp_path: Path) -> None:
    """A missing file maps to the I/O error class."""
    with pytest.raises(DataIOError):
        load_tensor(tmp_path / "missing.dtt")


# ---------------------------------------------------------------------------
# Masks
# ---------------------------------------------------------------------------


def test_random_mask_counts_and_determinism() -> None:
    """Exactly round(sr * N) ones, reproducible per seed."""
    m = gen_random_mask((10, 10, 10), 0.1, 4)
    assert int(m.sum()) == 100
    assert np.array_equal(m, gen_random_mask((10, 10, 10), 0.1, 4))
    assert np.array_equal(gen_random_mask((3, 3, 2), 1.0, 0), np.ones((3, 3, 2)))
    assert sampling_rate(m) == pytest.approx(0.1)


def test_tube_mask_structure() -> None:
    """Whole tubes are kept or dropped, in the exact count."""
    m = gen_tube_mask((16, 16, 8), 0.25, 3)
    assert np.all(m == m[:, :, :1])
    assert int(m[:, :, 0].sum()) == 64
    assert int(m.sum()) == 512
    assert int(gen_tube_mask((16, 16, 8), 0.3, 1)[:, :, 0].sum()) == 77
    assert np.array_equal(gen_tube_mask((4, 4, 2), 1.0, 0), np.ones((4, 4, 2)))


@pytest.mark.parametrize("sr", [0.0, -0.1, 1.5])
def test_masks_reject_bad_sampling_rate(sr: float) -> None:
    """The sampling rate must lie in (0, 1]."""
    with pytest.raises(ConfigError):
        gen_random_mask((4, 4, 2), sr, 0)
    with pytest.raises(ConfigError):
        gen_tube_mask((4, 4, 2), sr, 0)


def test_check_and_apply_mask(rng: np.random.Generator) -> None:
    """Masks must be binary; applying one zeroes the unobserved entries."""
    with pytest.raises(ConfigError):
        check_mask(np.full((2, 2, 1), 0.5))
    o = rng.uniform(size=(3, 3, 2))
    m = gen_random_mask(o.shape, 0.5, 0)
    assert np.array_equal(apply_mask(o, m), o * m)
    with pytest.raises(ShapeError):
        apply_mask(o, np.ones((3, 3, 1)))


# ---------------------------------------------------------------------------
# Normalization and synthesis
# ---------------------------------------------------------------------------


def test_normalize_bands() -> None:
    """Bands map affinely onto [0, 1]; constant bands become zeros."""
    t = np.zeros((2, 1, 3))
    t[:, 0, 0] = [0.0, 1.0]
    t[:, 0, 1] = [7.0, 7.0]
    t[:, 0, 2] = [2.0, 4.0]
    out, bounds = normalize_bands(t)
    assert np.array_equal(out[:, 0, 0], [0.0, 1.0])
    assert np.array_equal(out[:, 0, 1], [0.0, 0.0])
    assert np.array_equal(bounds[1], [7.0, 7.0])
    assert normalize_bands(np.array([[[2.0]], [[3.0]], [[4.0]]]))[0][1, 0, 0] == 0.5
    back = denormalize_bands(out, bounds)
    assert np.allclose(back[:, 0, [0, 2]], t[:, 0, [0, 2]])


def test_synth_low_tubal_rank() -> None:
    """The synthetic tensor has the requested tubal rank, lies in [0, 1] and is seeded."""
    t = synth_low_tubal_rank((16, 16, 4), 3, 0)
    assert tubal_rank(t) == 3
    assert t.min() >= 0.0 and t.max() == pytest.approx(1.0)
    assert np.array_equal(t, synth_low_tubal_rank((16, 16, 4), 3, 0))
    with pytest.raises(ConfigError):
        synth_low_tubal_rank((4, 4, 2), 0, 0)


def test_synth_smooth_is_normalized_and_seeded() -> None:
    """Smooth volumes are band-normalized and reproducible."""
    t = synth_smooth((12, 10, 5), 3)
    assert t.shape == (12, 10, 5)
    assert t.min() >= 0.0 and t.max() <= 1.0
    assert np.array_equal(t, synth_smooth((12, 10, 5), 3))


# ---------------------------------------------------------------------------
# Folding and export
# ---------------------------------------------------------------------------


def test_fold4_index_map(rng: np.random.Generator) -> None:
    """Mode 3 varies fastest in the merged axis; unfold inverts fold."""
    t = rng.standard_normal((2, 3, 4, 5))
    folded = fold4(t)
    assert folded.shape == (2, 3, 20)
    # one-based (i1, i2, 2, 3) lands at merged index (3 - 1) * n3 + 2
    assert folded[1, 2, 2 * 4 + 1] == t[1, 2, 1, 2]
    assert np.array_equal(unfold4(folded, 4, 5), t)
    with pytest.raises(ShapeError):
        unfold4(folded, 3, 5)


def test_to_bytes_rounding() -> None:
    """Clamp then scale with round-half-up."""
    assert list(to_bytes(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))) == [0, 0, 128, 255, 255]


def test_export_image(tmp_path: Path) -> None:
    """A zero tensor exports as a black PPM; bad band indices are rejected."""
    path = tmp_path / "x.ppm"
    t = np.zeros((4, 5, 3))
    t[0, 0, 2] = 1.0
    export_image(t, (0, 1, 2), path)
    assert path.read_bytes().startswith(b"P6")
    img = imread(path)
    assert img.shape == (4, 5, 3)
    assert img[0, 0, 2] == 255
    assert int(img.sum()) == 255
    with pytest.raises(ConfigError):
        export_image(t, (0, 1, 3), path)


def test_write_loss_csv(tmp_path: Path) -> None:
    """The loss CSV has the iteration,loss header."""
    path = tmp_path / "loss.csv"
    write_loss_csv([(0, 1.5), (10, 0.25)], path)
    assert path.read_text().splitlines() == ["iteration,loss", "0,1.5", "10,0.25"]
