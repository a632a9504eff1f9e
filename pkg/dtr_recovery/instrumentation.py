"""Prometheus metrics definitions for dtr-recovery.

Defines counters, histograms, and gauges incremented by the recovery
driver, the TNN baseline, and ``timed_stage``.  Batch runs export them with
``write_textfile`` (node-exporter textfile collector format).
"""

from __future__ import annotations

from pathlib import Path

from prometheus_client import REGISTRY, Counter, Gauge, Histogram, write_to_textfile

RECOVERY_STEPS = Counter(
    "dtr_recovery_steps_total",
    "Adam steps taken by the recovery driver",
    ["variant"],
)

RECOVERY_RUNS = Counter(
    "dtr_recovery_runs_total",
    "Recovery runs by outcome",
    ["variant", "outcome"],
)

LAST_LOSS = Gauge(
    "dtr_recovery_last_loss",
    "Most recent masked reconstruction loss",
    ["variant"],
)

STAGE_DURATION = Histogram(
    "dtr_stage_duration_seconds",
    "Pipeline stage duration in seconds",
    ["stage"],
    buckets=(
        0.01, 0.05, 0.1, 0.5, 1.0,
        5.0, 10.0, 30.0, 60.0, 300.0, 1800.0,
    ),
)

TNN_ITERATIONS = Counter(
    "dtr_tnn_iterations_total",
    "ADMM iterations run by the TNN baseline",
)


def write_textfile(path: str | Path) -> None:
    """Write every registered metric to ``path`` in text exposition format."""
    write_to_textfile(str(path), REGISTRY)
