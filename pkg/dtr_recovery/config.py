"""Application configuration via environment variables and .env file.

Uses pydantic-settings to load configuration from environment variables
(prefixed with ``DTR_``) with optional fallback to a .env file.  All
settings can be overridden by setting the corresponding environment
variable, e.g. ``DTR_LOG_LEVEL=DEBUG``.
"""

from __future__ import annotations

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Central configuration for dtr-recovery.

    Attributes:
        LOG_LEVEL: Minimum log level (DEBUG, INFO, WARNING, ERROR, CRITICAL).
        LOG_JSON: Render log lines as JSON (False renders console lines).
        DEFAULT_SEED: Seed used when a command is run without ``--seed``.
        DEFAULT_ITERATIONS: Adam step budget used when ``--iters`` is omitted.
        BENCH_WORKERS: Worker processes used by the benchmark sweep.
        METRICS_TEXTFILE: Optional path receiving Prometheus textfile output
            after every CLI run.
        TUBAL_RANK_TOL: Relative singular value cutoff used by ``tubal_rank``.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="DTR_",
        extra="ignore",
    )

    LOG_LEVEL: str = "INFO"
    LOG_JSON: bool = True
    DEFAULT_SEED: int = 0
    DEFAULT_ITERATIONS: int = 2000
    BENCH_WORKERS: int = 1
    METRICS_TEXTFILE: str | None = None
    TUBAL_RANK_TOL: float = 1e-8


settings = Settings()
