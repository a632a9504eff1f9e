"""Tests for structlog configuration."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

import pytest
import structlog

from dtr_recovery.errors import ConfigError
from dtr_recovery.logging_config import setup_logging
from dtr_recovery.main import main


@pytest.fixture(autouse=True)
def _restore_logging() -> Iterator[None]:
    yield
    setup_logging(log_level="WARNING", json=False)


@pytest.mark.parametrize("level", ["DEBUG", "INFO", "WARNING", "ERROR", "info"])
def test_setup_logging_accepts_standard_levels(level: str) -> None:
    """Every standard level name configures without error, in any case."""
    setup_logging(log_level=level)
    assert structlog.is_configured()


def test_level_filters_events(capsys: pytest.CaptureFixture[str]) -> None:
    """Events below the configured level are dropped; JSON lines go to stderr."""
    setup_logging(log_level="WARNING", json=True)
    log = structlog.get_logger("dtr_recovery.test")
    log.info("hidden_event")
    log.warning("shown_event", value=3)
    captured = capsys.readouterr()
    assert captured.out == ""
    lines = captured.err.strip().splitlines()
    assert len(lines) == 1
    record = json.loads(lines[0])
    assert record["event"] == "shown_event"
    assert record["level"] == "warning"
    assert record["value"] == 3


def test_unknown_level_is_config_error() -> None:
    """A level name outside the standard set is rejected."""
    with pytest.raises(ConfigError):
        setup_logging(log_level="CHATTY")


def test_cli_unknown_log_level_exits_usage(tmp_path: Path) -> None:
    """--log-level with an unknown name exits with code 1."""
    code = main(["--log-level", "CHATTY", "synth", "--dims", "4x4x2",
                 "--out", str(tmp_path / "x.dtt")])
    assert code == 1
