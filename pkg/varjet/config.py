from __future__ import annotations

import os
from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import TypeVar

N = TypeVar("N", int, float)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass(frozen=True)
class VarjetConfig:
    step: float
    max_norm: float
    detect_tol: float
    seed: int
    sample_count: int
    workers: int
    log_level: str
    report_dir: str


def _load_dotenv(path: Path) -> None:
    """KEY=VALUE lines; variables already in the environment win."""
    if not path.is_file():
        return

    for line in path.read_text(encoding="utf-8").splitlines():
        raw = line.strip().removeprefix("export ").strip()
        if not raw or raw.startswith("#") or "=" not in raw:
            continue
        key, value = (part.strip() for part in raw.split("=", 1))
        os.environ.setdefault(key, value.strip('"').strip("'"))


def _number(name: str, default: N, parse: Callable[[str], N], *, positive: bool = False) -> N:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    kind = "an integer" if parse is int else "a float"
    try:
        value = parse(raw.strip())
    except ValueError as exc:
        raise ValueError(f"{name} must be {kind}") from exc
    if positive and not value > 0:
        raise ValueError(f"{name} must be positive, got {raw}")
    return value


def _log_level() -> str:
    level = (os.getenv("VARJET_LOG_LEVEL") or "INFO").strip().upper()
    if level not in LOG_LEVELS:
        raise ValueError(f"VARJET_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}")
    return level


@lru_cache(maxsize=1)
def get_config() -> VarjetConfig:
    _load_dotenv(Path(".env"))

    return VarjetConfig(
        step=_number("VARJET_STEP", 1e-3, float, positive=True),
        max_norm=_number("VARJET_MAX_NORM", 1e8, float, positive=True),
        detect_tol=_number("VARJET_DETECT_TOL", 1e-7, float, positive=True),
        seed=_number("VARJET_SEED", 0, int),
        sample_count=_number("VARJET_SAMPLE_COUNT", 8, int, positive=True),
        workers=max(1, _number("VARJET_WORKERS", 2, int)),
        log_level=_log_level(),
        report_dir=os.getenv("VARJET_REPORT_DIR", "reports"),
    )
