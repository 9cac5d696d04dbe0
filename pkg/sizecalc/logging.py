"""JSON log records tagged with the current calculation run."""

from __future__ import annotations

import json
import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar, Token
from datetime import datetime, timezone
from typing import Any
from uuid import uuid4

import numpy as np
from pydantic import BaseModel

UTC = timezone.utc

RUN_ID: ContextVar[str | None] = ContextVar("run_id", default=None)
RUN_SEED: ContextVar[int | None] = ContextVar("run_seed", default=None)


def set_run_id(run_id: str) -> Token[str | None]:
    """Tag every record emitted in this execution flow with a run id."""
    return RUN_ID.set(run_id)


def clear_run_id(token: Token[str | None]) -> None:
    RUN_ID.reset(token)


def note_seed(seed: int) -> None:
    """Record the master seed once the run has resolved it."""
    RUN_SEED.set(seed)


@contextmanager
def bind_run() -> Iterator[str]:
    """Scope a fresh run id (and any seed noted inside) to one CLI invocation."""
    id_token = RUN_ID.set(uuid4().hex[:12])
    seed_token = RUN_SEED.set(None)
    try:
        yield RUN_ID.get() or ""
    finally:
        RUN_SEED.reset(seed_token)
        RUN_ID.reset(id_token)


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    return str(value)


class JsonFormatter(logging.Formatter):
    """One JSON object per record; numpy values in `context` are unwrapped."""

    def format(self, record: logging.LogRecord) -> str:
        payload: dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created, tz=UTC).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "run_id": RUN_ID.get(),
        }
        seed = RUN_SEED.get()
        if seed is not None:
            payload["seed"] = seed
        for extra in ("event", "context"):
            if hasattr(record, extra):
                payload[extra] = getattr(record, extra)
        if record.exc_info:
            payload["exc_info"] = self.formatException(record.exc_info)
        return json.dumps(payload, ensure_ascii=False, default=_jsonable)


def configure_logging(level: str = "INFO") -> None:
    """Send JSON records to stderr so stdout carries only reports."""
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter())

    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(level.upper())
