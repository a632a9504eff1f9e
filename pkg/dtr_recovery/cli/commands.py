"""Subcommand implementations.

Every ``cmd_*`` takes the parsed :class:`argparse.Namespace`, returns the
process exit code, and raises :class:`~dtr_recovery.errors.DtrError`
subclasses for failures.  Commands that write files also write a
:class:`~dtr_recovery.cli.manifest.RunManifest` next to their primary output.
"""

from __future__ import annotations

import argparse
import asyncio
import csv
import sys
import time
from pathlib import Path
from typing import Any, Callable

import numpy as np
import structlog

from dtr_recovery.baselines.tnn import AdmmParams, tnn_admm_complete
from dtr_recovery.cli.bench import build_cells, csv_writer, run_bench
from dtr_recovery.cli.gradcheck import run_suite
from dtr_recovery.cli.manifest import RunManifest, manifest_path
from dtr_recovery.config import settings
from dtr_recovery.data_io import (
    export_image,
    fold4,
    gen_random_mask,
    gen_tube_mask,
    load_tensor,
    sampling_rate,
    save_tensor,
    synth_low_tubal_rank,
    synth_smooth,
    unfold4,
    write_loss_csv,
)
from dtr_recovery.errors import ConfigError, DataIOError, NumericalError
from dtr_recovery.logging_config import timed_stage
from dtr_recovery.metrics import evaluate
from dtr_recovery.nets import FcnConfig, UNetConfig
from dtr_recovery.recovery import RecoveryConfig, recover_any

logger = structlog.get_logger(__name__)

# Namespace keys that steer the process rather than the computation.
RUNTIME_KEYS = frozenset({"command", "config", "csv", "metrics_file", "log_level", "handler"})


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------


def parse_dims(text: str) -> tuple[int, ...]:
    """Parse ``16x16x8`` style dims (order 3 or 4)."""
    try:
        dims = tuple(int(part) for part in text.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"Invalid dims {text!r}; expected e.g. 16x16x8.") from exc
    if len(dims) not in (3, 4) or min(dims) < 1:
        raise ConfigError(f"Invalid dims {text!r}; expected 3 or 4 positive sizes.")
    return dims


def parse_list(text: str, kind: Callable[[str], Any] = str) -> list[Any]:
    """Parse a comma-separated list."""
    try:
        return [kind(part.strip()) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"Invalid list {text!r}.") from exc


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise ConfigError(f"{args.command}: missing required option(s) {', '.join(missing)}.")


def _params(args: argparse.Namespace) -> dict[str, Any]:
    return {k: v for k, v in sorted(vars(args).items()) if k not in RUNTIME_KEYS}


def _manifest(
    args: argparse.Namespace,
    out: str,
    start: float,
    inputs: dict[str, str] | None = None,
    outputs: dict[str, str] | None = None,
    stats: dict[str, Any] | None = None,
) -> None:
    manifest = RunManifest(
        command=args.command,
        params=_params(args),
        seed=getattr(args, "seed", None),
        inputs=inputs or {},
        outputs={"out": out, **(outputs or {})},
        stats=stats or {},
        seconds=time.perf_counter() - start,
    )
    path = manifest.write(manifest_path(out))
    logger.debug("manifest_written", path=str(path))


def _seed(args: argparse.Namespace) -> int:
    return settings.DEFAULT_SEED if args.seed is None else int(args.seed)


# ---------------------------------------------------------------------------
# synth / mask
# ---------------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    """Write a synthetic order-3 tensor."""
    _require(args, "dims", "out")
    start = time.perf_counter()
    dims = parse_dims(args.dims)
    if len(dims) != 3:
        raise ConfigError("synth produces order-3 tensors only.")
    seed = _seed(args)
    with timed_stage("synth", kind=args.kind, dims=dims):
        if args.kind == "lowrank":
            t = synth_low_tubal_rank(dims, args.rank, seed)  # type: ignore[arg-type]
        else:
            t = synth_smooth(dims, seed)  # type: ignore[arg-type]
    save_tensor(t, args.out)
    args.seed = seed
    _manifest(args, args.out, start)
    return 0


def cmd_mask(args: argparse.Namespace) -> int:
    """Write a binary mask with the requested sampling rate and pattern."""
    _require(args, "out")
    start = time.perf_counter()
    if args.like:
        dims = load_tensor(args.like).shape
    elif args.dims:
        dims = parse_dims(args.dims)
    else:
        raise ConfigError("mask: one of --dims or --like is required.")
    seed = _seed(args)
    order4 = len(dims) == 4
    dims3 = (dims[0], dims[1], dims[2] * dims[3]) if order4 else dims
    make = gen_tube_mask if args.mode == "tube" else gen_random_mask
    m = make(dims3, args.sr, seed)  # type: ignore[arg-type]
    if order4:
        m = unfold4(m, dims[2], dims[3])
    save_tensor(m, args.out)
    observed = int(np.count_nonzero(m))
    tubes = int(np.count_nonzero(m.reshape(dims[0] * dims[1], -1, order="F").any(axis=1)))
    logger.info("mask_written", mode=args.mode, observed=observed, tubes=tubes, dims=dims)
    if args.csv:
        writer = csv.writer(sys.stdout)
        writer.writerow(["mode", "sr", "observed", "observed_tubes", "total"])
        writer.writerow([args.mode, repr(sampling_rate(m)), observed, tubes, m.size])
    args.seed = seed
    _manifest(args, args.out, start, inputs={"like": args.like} if args.like else None)
    return 0


# ---------------------------------------------------------------------------
# recover
# ---------------------------------------------------------------------------


def _fcn_config(args: argparse.Namespace) -> FcnConfig:
    widths = getattr(args, "fcn_widths", None)
    return FcnConfig(
        layers=getattr(args, "fcn_layers", 2),
        widths=parse_list(widths, int) if widths else None,
    )


def recovery_config(args: argparse.Namespace, seed: int) -> RecoveryConfig:
    """Translate recover flags into a :class:`RecoveryConfig`."""
    overrides: dict[str, Any] = {
        "iterations": args.iters,
        "lr": args.lr,
        "seed": seed,
        "log_every": args.log_every,
    }
    if args.variant == "dtr":
        overrides["use_transform"] = not args.no_transform
        overrides["unet"] = UNetConfig(
            depth=args.depth, base_channels=args.base_channels, kernel=args.kernel
        )
        if args.latent_channels is not None:
            overrides["latent_channels"] = args.latent_channels
    if args.variant == "hlrtf_like" and args.latent_channels is not None:
        overrides["latent_channels"] = args.latent_channels
    if args.variant == "hlrtf_like" or (args.variant == "dtr" and not args.no_transform):
        overrides["fcn"] = _fcn_config(args)
    if args.variant in ("hlrtf_like", "tubal_factorization") and args.rank is not None:
        overrides["rank"] = args.rank
    if args.variant == "deep_facewise" and args.facewise_ranks:
        overrides["facewise_ranks"] = parse_list(args.facewise_ranks, int)
    return RecoveryConfig.for_variant(args.variant, **overrides)


def _tnn(o: np.ndarray, m: np.ndarray, args: argparse.Namespace) -> tuple[np.ndarray, list]:
    folded = o.ndim == 4
    o3, m3 = (fold4(o), fold4(m)) if folded else (o, m)
    params = AdmmParams(max_iterations=args.iters)
    result = tnn_admm_complete(o3, m3, params)
    x = unfold4(result.tensor, o.shape[2], o.shape[3]) if folded else result.tensor
    return x, list(enumerate(result.objective, start=1))


def cmd_recover(args: argparse.Namespace) -> int:
    """Recover a tensor from its observed entries and write X, the loss CSV and a manifest."""
    _require(args, "input", "mask", "out")
    start = time.perf_counter()
    o = load_tensor(args.input)
    m = load_tensor(args.mask)
    truth = load_tensor(args.truth) if args.truth else None
    seed = _seed(args)
    args.seed = seed
    if args.iters is None:
        args.iters = (
            AdmmParams().max_iterations if args.variant == "tnn" else settings.DEFAULT_ITERATIONS
        )
    loss_csv = args.loss_csv or f"{args.out}.loss.csv"
    stats: dict[str, Any] = {}

    with timed_stage("recover", variant=args.variant, dims=o.shape) as stage:
        if args.variant == "tnn":
            x, history = _tnn(o, m, args)
        else:
            result = recover_any(o, m, recovery_config(args, seed))
            x, history = result.tensor, result.loss_history
            stage["parameters"] = result.parameter_count
            stats["parameters"] = result.parameter_count
    save_tensor(x, args.out)
    write_loss_csv(history, loss_csv)

    if truth is not None:
        x3, t3 = (fold4(x), fold4(truth)) if x.ndim == 4 else (x, truth)
        report = evaluate(x3, t3)
        logger.info("recover_scored", psnr=report.psnr_mean, ssim=report.ssim_mean)
        if args.csv:
            writer = csv.writer(sys.stdout)
            writer.writerow(["variant", "psnr", "ssim"])
            writer.writerow([args.variant, repr(report.psnr_mean), repr(report.ssim_mean)])

    inputs = {"input": args.input, "mask": args.mask}
    if args.truth:
        inputs["truth"] = args.truth
    _manifest(
        args, args.out, start, inputs=inputs, outputs={"loss_csv": loss_csv}, stats=stats
    )
    return 0


# ---------------------------------------------------------------------------
# metrics / gradcheck / export
# ---------------------------------------------------------------------------


def cmd_metrics(args: argparse.Namespace) -> int:
    """Print ``band,psnr,ssim`` rows and a ``mean`` row; optionally write them to ``--out``."""
    _require(args, "a", "b")
    start = time.perf_counter()
    a, b = load_tensor(args.a), load_tensor(args.b)
    if a.ndim == 4:
        a = fold4(a)
    if b.ndim == 4:
        b = fold4(b)
    report = evaluate(a, b, mode=args.mode)
    rows = [
        [str(k), repr(p), repr(s)]
        for k, (p, s) in enumerate(zip(report.psnr_bands, report.ssim_bands))
    ]
    rows.append(["mean", repr(report.psnr_mean), repr(report.ssim_mean)])

    def emit(stream: Any) -> None:
        writer = csv.writer(stream)
        writer.writerow(["band", "psnr", "ssim"])
        writer.writerows(rows)

    emit(sys.stdout)
    if args.out:
        try:
            with Path(args.out).open("w", newline="") as fh:
                emit(fh)
        except OSError as exc:
            raise DataIOError(f"Cannot write {args.out}: {exc}") from exc
        _manifest(args, args.out, start, inputs={"a": args.a, "b": args.b})
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    """Run the primitive gradient suite; fails with exit code 3 if any check fails."""
    reports = run_suite(seed=_seed(args), h=args.h, tol=args.tol)
    writer = csv.writer(sys.stdout)
    writer.writerow(["primitive", "max_error", "passed"])
    for name, report in reports.items():
        worst = max(report.max_errors.values(), default=0.0)
        writer.writerow([name, repr(worst), str(report.passed).lower()])
    failed = [name for name, report in reports.items() if not report.passed]
    if failed:
        raise NumericalError(f"Gradient check failed for: {', '.join(failed)}.")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    """Write a pseudo-color PPM from three zero-based bands."""
    _require(args, "input", "out")
    start = time.perf_counter()
    t = load_tensor(args.input)
    if t.ndim == 4:
        t = fold4(t)
    bands = tuple(parse_list(args.bands, int))
    if len(bands) != 3:
        raise ConfigError(f"--bands needs exactly three indices, got {args.bands!r}.")
    export_image(t, bands, args.out)  # type: ignore[arg-type]
    _manifest(args, args.out, start, inputs={"input": args.input})
    return 0


# ---------------------------------------------------------------------------
# bench / replay
# ---------------------------------------------------------------------------


def cmd_bench(args: argparse.Namespace) -> int:
    """Sweep variants, mask modes, sampling rates and seeds; write the results CSV."""
    dims = parse_dims(args.dims)
    if len(dims) != 3:
        raise ConfigError("bench runs on order-3 volumes only.")
    cells = build_cells(
        parse_list(args.variants),
        parse_list(args.masks),
        parse_list(args.srs, float),
        parse_list(args.seeds, int),
        dims=dims,
        iterations=args.iters or settings.DEFAULT_ITERATIONS,
        lr=args.lr,
    )
    args.iters = cells[0].iterations if cells else args.iters
    workers = args.workers or settings.BENCH_WORKERS
    args.workers = workers
    logger.info("bench_started", cells=len(cells), workers=workers)
    start = time.perf_counter()
    if args.out:
        try:
            with Path(args.out).open("w", newline="") as fh:
                asyncio.run(run_bench(cells, workers, on_row=csv_writer(fh)))
        except OSError as exc:
            raise DataIOError(f"Cannot write {args.out}: {exc}") from exc
        _manifest(args, args.out, start)
    else:
        asyncio.run(run_bench(cells, workers, on_row=csv_writer(sys.stdout)))
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    """Re-run the command recorded in a manifest with the same resolved parameters."""
    _require(args, "manifest")
    manifest = RunManifest.load(args.manifest)
    if manifest.command not in COMMANDS or manifest.command == "replay":
        raise ConfigError(f"Manifest records an unsupported command {manifest.command!r}.")
    replayed = argparse.Namespace(
        **manifest.params, command=manifest.command, csv=args.csv, metrics_file=None
    )
    logger.info("replay_started", command=manifest.command, recorded_version=manifest.version)
    return COMMANDS[manifest.command](replayed)


COMMANDS: dict[str, Callable[[argparse.Namespace], int]] = {
    "synth": cmd_synth,
    "mask": cmd_mask,
    "recover": cmd_recover,
    "metrics": cmd_metrics,
    "gradcheck": cmd_gradcheck,
    "export": cmd_export,
    "bench": cmd_bench,
    "replay": cmd_replay,
}
