"""Report persistence: ``varjet-report/1`` JSON plus an optional plot-ready CSV."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, is_dataclass
from datetime import datetime

try:
    from datetime import UTC
except ImportError:  # Python < 3.11
    from datetime import timezone

    UTC = timezone.utc
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, Field

from varjet import __version__
from varjet.errors import ReportWriteError

logger = logging.getLogger(__name__)

REPORT_FORMAT = "varjet-report/1"
CSV_COLUMNS = ("t", "residual", "scale")


class ReportDocument(BaseModel):
    format: Literal["varjet-report/1"] = REPORT_FORMAT
    tool: str = "varjet"
    version: str = __version__
    command: str
    inputDigest: str
    seed: int | None = None
    generatedAt: str
    tolerances: dict[str, float] = Field(default_factory=dict)
    verdicts: dict[str, Any] = Field(default_factory=dict)
    results: dict[str, Any] = Field(default_factory=dict)


def to_plain(value: Any) -> Any:
    """JSON-ready copy: arrays become lists, non-finite floats become null."""
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if is_dataclass(value) and not isinstance(value, type):
        return to_plain(asdict(value))
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        return number if math.isfinite(number) else None
    return value


def input_digest(paths: Iterable[str | Path]) -> str:
    digest = hashlib.sha256()
    for path in paths:
        try:
            digest.update(Path(path).read_bytes())
        except OSError as exc:
            raise ReportWriteError(f"cannot read input {path} for digest: {exc}") from exc
        digest.update(b"\0")
    return digest.hexdigest()


def build_report(
    command: str,
    results: dict[str, Any],
    *,
    inputs: Sequence[str | Path] = (),
    seed: int | None = None,
    tolerances: dict[str, float] | None = None,
    verdicts: dict[str, Any] | None = None,
    now: datetime | None = None,
) -> ReportDocument:
    return ReportDocument(
        command=command,
        inputDigest=input_digest(inputs),
        seed=seed,
        generatedAt=(now or datetime.now(UTC)).isoformat(),
        tolerances=tolerances or {},
        verdicts=to_plain(verdicts or {}),
        results=to_plain(results),
    )


def render_report(document: ReportDocument) -> str:
    return json.dumps(document.model_dump(mode="json"), sort_keys=True, indent=2, allow_nan=False) + "\n"


def emit_report(
    document: ReportDocument,
    path: str | Path,
    rows: Sequence[tuple[float, float, float]] | None = None,
    csv_path: str | Path | None = None,
) -> Path:
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(render_report(document), encoding="utf-8")
        if csv_path is not None:
            with Path(csv_path).open("w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(CSV_COLUMNS)
                for row in rows or ():
                    writer.writerow([f"{float(x):.17g}" for x in row])
    except OSError as exc:
        raise ReportWriteError(f"cannot write report {target}: {exc}") from exc
    logger.info("report written path=%s csv=%s", target, csv_path)
    return target
