"""Run manifests: everything needed to re-execute a CLI command bit for bit."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field, ValidationError

from dtr_recovery import __version__
from dtr_recovery.errors import DataIOError

MANIFEST_SUFFIX = ".manifest.json"


class RunManifest(BaseModel):
    """Record of one CLI run.

    Attributes:
        command: Subcommand name.
        params: Every resolved argument, defaults and config-file values included.
        seed: Seed the run used, when the command is seeded.
        inputs: Input files by role.
        outputs: Output files by role.
        stats: Run figures worth keeping, such as the trainable parameter count.
        seconds: Wall time.
        version: Package version that produced the outputs.
    """

    command: str
    params: dict[str, Any]
    seed: int | None = None
    inputs: dict[str, str] = Field(default_factory=dict)
    outputs: dict[str, str] = Field(default_factory=dict)
    stats: dict[str, Any] = Field(default_factory=dict)
    seconds: float = 0.0
    version: str = __version__

    def write(self, path: str | Path) -> Path:
        target = Path(path)
        try:
            target.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        except OSError as exc:
            raise DataIOError(f"Cannot write manifest {target}: {exc}") from exc
        return target

    @classmethod
    def load(cls, path: str | Path) -> RunManifest:
        """Read a manifest written by :meth:`write`.

        Raises:
            DataIOError: if the file cannot be read or is not a valid manifest.
        """
        try:
            raw = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataIOError(f"Cannot read manifest {path}: {exc}") from exc
        try:
            return cls.model_validate(json.loads(raw))
        except (json.JSONDecodeError, ValidationError) as exc:
            raise DataIOError(f"Malformed manifest {path}: {exc}") from exc


def manifest_path(output: str | Path) -> Path:
    """``<output>.manifest.json`` next to the primary output."""
    return Path(f"{output}{MANIFEST_SUFFIX}")
