from __future__ import annotations

import os
from typing import Any, TypeVar

from pydantic import BaseModel, ValidationError

from .errors import ParameterError

M = TypeVar("M", bound=BaseModel)

THREADS_ENV = "GMIS_THREADS"
LOG_LEVEL_ENV = "GMIS_LOG_LEVEL"


def build_model(model: type[M], **fields: Any) -> M:
    """Validate ``fields`` into ``model``, re-raising failures as ParameterError."""

    try:
        return model(**fields)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first.get("loc", ())) or model.__name__
        raise ParameterError(f"{loc}: {first.get('msg', 'invalid value')}") from exc


def require_positive(name: str, value: float) -> float:
    if not value > 0:
        raise ParameterError(f"{name} must be positive, got {value}")
    return value


def require_count(name: str, value: int, *, minimum: int = 1) -> int:
    if int(value) != value or value < minimum:
        raise ParameterError(f"{name} must be an integer >= {minimum}, got {value}")
    return int(value)


def require_cycles(n: int, m: int) -> int:
    """Number of whole cycles of ``n`` in ``m``."""

    require_count("N", n)
    require_count("M", m)
    if m % n:
        raise ParameterError(f"M ({m}) must be a multiple of N ({n})")
    return m // n


def thread_count(default: int | None = None) -> int:
    """Worker count: ``GMIS_THREADS`` when set, else ``default`` or the CPU count."""

    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return require_count(THREADS_ENV, int(raw))
        except ValueError as exc:
            raise ParameterError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    return default or os.cpu_count() or 1


def log_level() -> str:
    return os.environ.get(LOG_LEVEL_ENV, "WARNING").upper()


def directives(text: str) -> list[tuple[int, list[str], list[int]]]:
    """Split a line-oriented file into ``(line, tokens, columns)`` triples.

    ``#`` starts a comment; blank lines are skipped. Columns are 1-based.
    """

    out: list[tuple[int, list[str], list[int]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        tokens: list[str] = []
        columns: list[int] = []
        col = 0
        for tok in line.split():
            col = line.index(tok, col)
            tokens.append(tok)
            columns.append(col + 1)
            col += len(tok)
        if tokens:
            out.append((lineno, tokens, columns))
    return out
