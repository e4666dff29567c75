"""시스템/리카티 문서(JSON) 파싱.

``varjet-sys/1``::

    {"format": "varjet-sys/1", "n": 2,
     "a": [[0], [0]], "B": [[[0], [1]], [[-1], [0]]], "C": ..., "T3": ...}

Every entry is a t-polynomial given by its coefficients in ascending powers
(a bare number is a constant). ``varjet-ric/1`` carries ``n, a, B, c``.
"""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from varjet.errors import DocumentError
from varjet.sysmodel import MAX_DIMENSION, PolySystem, PolyT, RiccatiCoeffs, riccati_to_system

logger = logging.getLogger(__name__)

SYSTEM_FORMAT = "varjet-sys/1"
RICCATI_FORMAT = "varjet-ric/1"

Poly = float | list[float]


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(ge=1, le=MAX_DIMENSION)
    a: list[Poly]
    B: list[list[Poly]]


class SystemDocument(_Document):
    format: Literal["varjet-sys/1"]
    C: list[list[Poly]] | None = None
    T3: list[list[Poly]] | None = None


class RiccatiDocument(_Document):
    format: Literal["varjet-ric/1"]
    c: list[Poly]


def _line_of(text: str, key: str | None) -> int | None:
    if key is None:
        return None
    match = re.search(rf'"{re.escape(key)}"\s*:', text)
    return text.count("\n", 0, match.start()) + 1 if match else None


def _poly(entry: Poly) -> PolyT:
    if isinstance(entry, (int, float)):
        return PolyT((float(entry),))
    return PolyT(tuple(float(c) for c in entry) or (0.0,))


def _stack(rows: list, shape: tuple[int, ...], name: str, text: str) -> np.ndarray:
    """Nested entries of the given shape -> (K, *shape) coefficient stack."""
    try:
        if len(rows) != shape[0]:
            raise ValueError
        if len(shape) == 1:
            entries = {(i,): _poly(rows[i]) for i in range(shape[0])}
        else:
            if any(len(row) != shape[1] for row in rows):
                raise ValueError
            entries = {(i, j): _poly(rows[i][j]) for i in range(shape[0]) for j in range(shape[1])}
    except (ValueError, TypeError):
        raise DocumentError(
            f"{name} must have shape {'x'.join(map(str, shape))}", field=name, line=_line_of(text, name)
        ) from None

    out = np.zeros((max(p.degree for p in entries.values()) + 1,) + shape)
    for index, poly in entries.items():
        out[(slice(0, poly.degree + 1),) + index] = poly.coefficients
    if not np.isfinite(out).all():
        raise DocumentError(f"{name} has non-finite coefficients", field=name, line=_line_of(text, name))
    return out


def _load_json(text: str) -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise DocumentError("document must be a JSON object", line=1)
    return raw


def _validate(model: type[_Document], raw: dict, text: str) -> _Document:
    try:
        return model.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or None
        top = str(first["loc"][0]) if first["loc"] else None
        raise DocumentError(first["msg"], field=field, line=_line_of(text, top)) from exc


def parse_system_document(text: str) -> PolySystem:
    doc = _validate(SystemDocument, _load_json(text), text)
    n = doc.n
    a = _stack(doc.a, (n,), "a", text)
    b = _stack(doc.B, (n, n), "B", text)
    c = None if doc.C is None else _stack(doc.C, (n, n**2), "C", text)
    t3 = None if doc.T3 is None else _stack(doc.T3, (n, n**3), "T3", text)
    return PolySystem.from_coefficients(n, a, b, c, t3)


def parse_riccati_document(text: str) -> RiccatiCoeffs:
    doc = _validate(RiccatiDocument, _load_json(text), text)
    n = doc.n
    return RiccatiCoeffs.from_coefficients(
        n, _stack(doc.a, (n,), "a", text), _stack(doc.B, (n, n), "B", text), _stack(doc.c, (n,), "c", text)
    )


def _read(path: str | Path) -> str:
    path = Path(path)
    if not path.exists():
        raise DocumentError(f"document not found: {path}")
    try:
        return path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DocumentError(f"{path} is not UTF-8 text: {exc.reason} at byte {exc.start}") from exc
    except OSError as exc:
        raise DocumentError(f"cannot read {path}: {exc.strerror or exc}") from exc


def load_riccati(path: str | Path) -> RiccatiCoeffs:
    return parse_riccati_document(_read(path))


def load_system(path: str | Path) -> PolySystem:
    """시스템 문서를 읽는다. 리카티 문서도 받아 다항식 시스템으로 변환한다."""
    text = _read(path)
    tag = _load_json(text).get("format")
    if tag == RICCATI_FORMAT:
        logger.debug("%s is a riccati document; converting", path)
        return riccati_to_system(parse_riccati_document(text))
    return parse_system_document(text)
