"""Benchmark sweep over variant x mask mode x sampling rate x seed.

Every cell synthesizes a smooth volume, masks it, recovers it and scores
the result.  Cells run concurrently in a worker pool driven by asyncio;
rows are written by the event loop alone, in cell order.
"""

from __future__ import annotations

import asyncio
import csv
import time
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from itertools import product
from typing import Callable, Iterable, Literal, TextIO

import structlog
from pydantic import BaseModel, Field

from dtr_recovery.baselines.tnn import tnn_admm_complete
from dtr_recovery.data_io import apply_mask, gen_random_mask, gen_tube_mask, synth_smooth
from dtr_recovery.metrics import evaluate
from dtr_recovery.recovery import RecoveryConfig, recover

logger = structlog.get_logger(__name__)

BenchVariant = Literal["dtr", "hlrtf_like", "tubal_factorization", "deep_facewise", "tnn"]
MaskMode = Literal["random", "tube"]

CSV_HEADER = ("variant", "mask", "sr", "psnr", "ssim", "seconds")


class BenchCell(BaseModel):
    """One benchmark configuration."""

    variant: BenchVariant
    mask: MaskMode = "random"
    sr: float = Field(..., gt=0, le=1)
    seed: int = 0
    dims: tuple[int, int, int] = (32, 32, 8)
    iterations: int = Field(2000, ge=1)
    lr: float = Field(1e-3, gt=0)


class BenchRow(BaseModel):
    """Scores of one cell."""

    variant: str
    mask: str
    sr: float
    psnr: float
    ssim: float
    seconds: float
    seed: int = 0

    def as_csv(self) -> list[str]:
        return [
            self.variant,
            self.mask,
            repr(self.sr),
            repr(self.psnr),
            repr(self.ssim),
            f"{self.seconds:.3f}",
        ]


def build_cells(
    variants: Iterable[str],
    masks: Iterable[str],
    srs: Iterable[float],
    seeds: Iterable[int],
    **common: object,
) -> list[BenchCell]:
    """Cartesian product of the sweep axes, seeds varying fastest."""
    return [
        BenchCell(variant=v, mask=mk, sr=sr, seed=seed, **common)  # type: ignore[arg-type]
        for v, mk, sr, seed in product(variants, masks, srs, seeds)
    ]


def run_cell(cell: BenchCell) -> BenchRow:
    """Synthesize, mask, recover and score one cell."""
    truth = synth_smooth(cell.dims, cell.seed)
    make_mask = gen_tube_mask if cell.mask == "tube" else gen_random_mask
    m = make_mask(cell.dims, cell.sr, cell.seed + 1)
    o = apply_mask(truth, m)
    start = time.perf_counter()
    if cell.variant == "tnn":
        x = tnn_admm_complete(o, m).tensor
    else:
        cfg = RecoveryConfig.for_variant(
            cell.variant, iterations=cell.iterations, lr=cell.lr, seed=cell.seed
        )
        x = recover(o, m, cfg).tensor
    seconds = time.perf_counter() - start
    report = evaluate(x, truth)
    return BenchRow(
        variant=cell.variant,
        mask=cell.mask,
        sr=cell.sr,
        psnr=report.psnr_mean,
        ssim=report.ssim_mean,
        seconds=seconds,
        seed=cell.seed,
    )


def _executor(workers: int) -> Executor:
    if workers > 1:
        return ProcessPoolExecutor(max_workers=workers)
    return ThreadPoolExecutor(max_workers=1)


async def run_bench(
    cells: list[BenchCell],
    workers: int = 1,
    on_row: Callable[[BenchRow], None] | None = None,
    runner: Callable[[BenchCell], BenchRow] = run_cell,
) -> list[BenchRow]:
    """Run all cells in a pool of ``workers`` and collect rows in cell order.

    Parameters:
        cells: Sweep configurations.
        workers: Pool size; more than one uses worker processes.
        on_row: Called from the event loop for every row, in cell order.
        runner: Cell function (must be picklable for process pools).
    """
    loop = asyncio.get_running_loop()
    with _executor(workers) as pool:
        futures = [loop.run_in_executor(pool, runner, cell) for cell in cells]
        rows: list[BenchRow] = []
        for cell, future in zip(cells, futures):
            row = await future
            await logger.ainfo(
                "bench_cell_finished",
                variant=row.variant,
                mask=row.mask,
                sr=row.sr,
                seed=cell.seed,
                psnr=round(row.psnr, 3),
                seconds=round(row.seconds, 3),
            )
            if on_row is not None:
                on_row(row)
            rows.append(row)
    return rows


def csv_writer(stream: TextIO) -> Callable[[BenchRow], None]:
    """Row callback writing the bench CSV header once, then one line per row."""
    writer = csv.writer(stream)
    writer.writerow(CSV_HEADER)

    def write(row: BenchRow) -> None:
        writer.writerow(row.as_csv())
        stream.flush()

    return write
