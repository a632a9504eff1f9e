"""Command-line entry point for dtr-recovery.

Parses the subcommand, applies an optional ``--config`` file of
``key=value`` defaults, sets up structured logging, dispatches to
:mod:`dtr_recovery.cli.commands` and maps errors to exit codes::

    dtr-recovery synth --kind smooth --dims 32x32x8 --seed 0 --out x.dtt
    dtr-recovery mask --mode tube --sr 0.3 --dims 32x32x8 --seed 1 --out m.dtt
    dtr-recovery recover --variant dtr --input x.dtt --mask m.dtt --out r.dtt
    dtr-recovery metrics --a r.dtt --b x.dtt
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import NoReturn, Sequence

import structlog
from pydantic import ValidationError

from dtr_recovery import __version__
from dtr_recovery.cli.commands import COMMANDS
from dtr_recovery.config import settings
from dtr_recovery.errors import ConfigError, DataIOError, DtrError
from dtr_recovery.instrumentation import write_textfile
from dtr_recovery.logging_config import setup_logging

logger = structlog.get_logger("dtr_recovery.main")

USAGE_EXIT = 1


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _common(sub: argparse.ArgumentParser, seeded: bool = True) -> None:
    sub.add_argument("--config", help="key=value file of default options")
    sub.add_argument("--csv", action="store_true", help="print machine-readable CSV on stdout")
    sub.add_argument("--metrics-file", help="write Prometheus textfile metrics here")
    if seeded:
        sub.add_argument("--seed", type=int, help="random seed (default DTR_DEFAULT_SEED)")


def build_parser() -> tuple[ArgumentParser, dict[str, ArgumentParser]]:
    """Top-level parser and the subparsers by command name."""
    parser = ArgumentParser(prog="dtr-recovery", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="override DTR_LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)
    subs: dict[str, ArgumentParser] = {}

    p = commands.add_parser("synth", help="write a synthetic tensor")
    _common(p)
    p.add_argument("--kind", choices=["smooth", "lowrank"], default="smooth")
    p.add_argument("--dims", help="n1xn2xn3, e.g. 32x32x8")
    p.add_argument("--rank", type=int, default=3, help="tubal rank for --kind lowrank")
    p.add_argument("--out")
    subs["synth"] = p

    p = commands.add_parser("mask", help="write a binary sampling mask")
    _common(p)
    p.add_argument("--mode", choices=["random", "tube"], default="random")
    p.add_argument("--sr", type=float, default=0.3, help="sampling rate in (0, 1]")
    p.add_argument("--dims", help="mask dims; alternatively --like")
    p.add_argument("--like", help="take dims from this tensor file")
    p.add_argument("--out")
    subs["mask"] = p

    p = commands.add_parser("recover", help="recover a tensor from observed entries")
    _common(p)
    p.add_argument(
        "--variant",
        choices=["dtr", "hlrtf_like", "tubal_factorization", "deep_facewise", "tnn"],
        default="dtr",
    )
    p.add_argument("--input", help="observation tensor")
    p.add_argument("--mask", help="mask tensor")
    p.add_argument("--truth", help="ground truth for scoring")
    p.add_argument("--out")
    p.add_argument("--loss-csv", help="default <out>.loss.csv")
    p.add_argument("--iters", type=int, help="iteration budget (default DTR_DEFAULT_ITERATIONS)")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--log-every", type=int, default=100)
    p.add_argument("--rank", type=int, help="factor rank r")
    p.add_argument("--latent-channels", type=int, help="latent channel count")
    p.add_argument("--no-transform", action="store_true", help="dtr without the FCN transform")
    p.add_argument("--depth", type=int, default=2, help="U-Net scales")
    p.add_argument("--base-channels", type=int, default=32)
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--fcn-layers", type=int, default=2, help="tube-wise FCN depth K")
    p.add_argument("--fcn-widths", help="K-1 hidden FCN widths, e.g. 16,16")
    p.add_argument("--facewise-ranks", help="interior ranks for deep_facewise, e.g. 8,8")
    subs["recover"] = p

    p = commands.add_parser("metrics", help="PSNR/SSIM of --a against --b")
    _common(p, seeded=False)
    p.add_argument("--a", help="estimate")
    p.add_argument("--b", help="reference")
    p.add_argument("--mode", choices=["band", "volume"], default="band")
    p.add_argument("--out", help="also write the CSV here")
    subs["metrics"] = p

    p = commands.add_parser("gradcheck", help="check autodiff gradients numerically")
    _common(p)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    subs["gradcheck"] = p

    p = commands.add_parser("export", help="write a pseudo-color PPM")
    _common(p, seeded=False)
    p.add_argument("--input")
    p.add_argument("--bands", default="0,1,2", help="three zero-based band indices")
    p.add_argument("--out")
    subs["export"] = p

    p = commands.add_parser("bench", help="sweep variants, masks and sampling rates")
    _common(p, seeded=False)
    p.add_argument("--variants", default="dtr,tubal_factorization")
    p.add_argument("--masks", default="random")
    p.add_argument("--srs", default="0.1,0.3")
    p.add_argument("--seeds", default="0")
    p.add_argument("--dims", default="32x32x8")
    p.add_argument("--iters", type=int)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--workers", type=int, help="default DTR_BENCH_WORKERS")
    p.add_argument("--out", help="results CSV (stdout when omitted)")
    subs["bench"] = p

    p = commands.add_parser("replay", help="re-run a command from its manifest")
    _common(p, seeded=False)
    p.add_argument("--manifest")
    subs["replay"] = p

    return parser, subs


def load_config_file(path: str | Path) -> dict[str, str]:
    """Read ``key=value`` lines; ``#`` starts a comment, blank lines are skipped.

    Keys may use dashes or underscores.

    Raises:
        DataIOError: if the file cannot be read.
        ConfigError: if a line has no ``=``.
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataIOError(f"Cannot read config file {path}: {exc}") from exc
    values: dict[str, str] = {}
    for number, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        key, sep, value = text.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{number}: expected key=value, got {line!r}.")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(sub: ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions if a.dest != "help"}
    defaults: dict[str, object] = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None or key == "config":
            raise ConfigError(f"Config key {key!r} is not an option of this command.")
        if action.nargs == 0:
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            # argparse converts string defaults with the option's type
            defaults[key] = value
    sub.set_defaults(**defaults)


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    """Parse ``argv``, letting ``--config`` values fill options not given explicitly."""
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        _apply_config(subs[args.command], load_config_file(args.config))
        args = parser.parse_args(argv)
    return args


def _fail(log: structlog.typing.FilteringBoundLogger, exc: DtrError) -> int:
    log.error("command_failed", error=type(exc).__name__, exit_code=exc.exit_code)
    print(f"dtr-recovery: {exc.detail}", file=sys.stderr)
    return exc.exit_code


def main(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand and return its exit code."""
    try:
        args = parse_args(argv)
        setup_logging(log_level=args.log_level or settings.LOG_LEVEL, json=settings.LOG_JSON)
    except DtrError as exc:
        setup_logging(log_level="INFO", json=settings.LOG_JSON)
        return _fail(logger, exc)
    log = logger.bind(command=args.command)
    try:
        code = COMMANDS[args.command](args)
    except ValidationError as exc:
        return _fail(log, ConfigError(f"Invalid configuration: {exc}"))
    except DtrError as exc:
        return _fail(log, exc)
    finally:
        metrics_file = getattr(args, "metrics_file", None) or settings.METRICS_TEXTFILE
        if metrics_file:
            try:
                write_textfile(metrics_file)
            except OSError as exc:
                log.warning("metrics_textfile_failed", path=str(metrics_file), error=str(exc))
    return code


def run() -> None:
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    run()
