"""Tests for the benchmark sweep."""

from __future__ import annotations

import io
import time

import numpy as np
import pytest

from dtr_recovery.cli.bench import (
    CSV_HEADER,
    BenchCell,
    BenchRow,
    build_cells,
    csv_writer,
    run_bench,
    run_cell,
)


def _fake_runner(cell: BenchCell) -> BenchRow:
    # later cells finish first when run concurrently
    time.sleep(0.05 * (1.0 - cell.sr))
    return BenchRow(
        variant=cell.variant, mask=cell.mask, sr=cell.sr, psnr=30.0 + cell.sr,
        ssim=0.9, seconds=0.0, seed=cell.seed,
    )


def test_build_cells_order() -> None:
    """Seeds vary fastest, variants slowest."""
    cells = build_cells(["dtr", "tnn"], ["random"], [0.1, 0.3], [0, 1], iterations=5)
    assert len(cells) == 8
    assert [(c.variant, c.sr, c.seed) for c in cells[:3]] == [
        ("dtr", 0.1, 0), ("dtr", 0.1, 1), ("dtr", 0.3, 0),
    ]
    assert all(c.iterations == 5 for c in cells)


def test_cell_validation() -> None:
    """Sampling rates outside (0, 1] are rejected."""
    with pytest.raises(ValueError):
        BenchCell(variant="dtr", sr=0.0)


@pytest.mark.asyncio
@pytest.mark.parametrize("workers", [1, 2])
async def test_rows_arrive_in_cell_order(workers: int) -> None:
    """Rows are emitted in cell order whatever order workers finish in."""
    cells = build_cells(["dtr"], ["random", "tube"], [0.1, 0.5, 0.9], [0])
    seen: list[BenchRow] = []
    rows = await run_bench(cells, workers, on_row=seen.append, runner=_fake_runner)
    assert rows == seen
    assert [(r.mask, r.sr) for r in rows] == [(c.mask, c.sr) for c in cells]


@pytest.mark.asyncio
async def test_csv_writer_output() -> None:
    """The CSV has the fixed header and one line per cell."""
    stream = io.StringIO()
    cells = build_cells(["dtr", "tnn"], ["random"], [0.3], [0])
    await run_bench(cells, 1, on_row=csv_writer(stream), runner=_fake_runner)
    lines = stream.getvalue().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1].startswith("dtr,random,0.3,30.")
    assert lines[2].startswith("tnn,random,0.3,")


def test_run_cell_small() -> None:
    """A tiny real cell produces finite scores."""
    cell = BenchCell(variant="tubal_factorization", sr=0.5, dims=(12, 12, 4), iterations=5)
    row = run_cell(cell)
    assert row.variant == "tubal_factorization"
    assert 0.0 < row.psnr < float("inf")
    assert -1.0 <= row.ssim <= 1.0


@pytest.mark.slow
def test_dtr_beats_tubal_factorization_and_tracks_sampling_rate() -> None:
    """DTR wins on most seeds; mean PSNR does not drop as the sampling rate grows."""
    cells = build_cells(
        ["dtr", "tubal_factorization"], ["random"], [0.1, 0.3], range(5), iterations=2000
    )
    scores = {(c.variant, c.sr, c.seed): run_cell(c).psnr for c in cells}
    wins = sum(scores[("dtr", 0.3, s)] > scores[("tubal_factorization", 0.3, s)] for s in range(5))
    assert wins >= 3
    for variant in ("dtr", "tubal_factorization"):
        low = np.mean([scores[(variant, 0.1, s)] for s in range(5)])
        high = np.mean([scores[(variant, 0.3, s)] for s in range(5)])
        assert high >= low
