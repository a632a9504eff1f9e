"""Shared pytest fixtures for the dtr-recovery test suite."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from dtr_recovery.logging_config import setup_logging

# Console rendering keeps captured log output readable on failures.
setup_logging(log_level="WARNING", json=False)


@pytest.fixture()
def rng() -> np.random.Generator:
    """Seeded generator so every test draws the same data on every run."""
    return np.random.default_rng(12345)


@pytest.fixture()
def clean_env(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> pytest.MonkeyPatch:
    """Strip ``DTR_*`` variables and run from an empty directory (no stray .env)."""
    for key in list(os.environ):
        if key.startswith("DTR_"):
            monkeypatch.delenv(key)
    monkeypatch.chdir(tmp_path)
    return monkeypatch
