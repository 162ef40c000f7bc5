"""Small input-checking helpers used by the estimators and loaders."""
from __future__ import annotations

import math
import numbers
from typing import Any, Mapping

from .errors import ParseError, ValidationError


def check_positive(value: Any, name: str, owner: str = "") -> float:
    v = check_real(value, name, owner)
    if not v > 0:
        raise ValidationError(f"{_where(owner)}{name} must be > 0, got {value!r}")
    return v


def check_nonnegative(value: Any, name: str, owner: str = "") -> float:
    v = check_real(value, name, owner)
    if v < 0:
        raise ValidationError(f"{_where(owner)}{name} must be >= 0, got {value!r}")
    return v


def check_real(value: Any, name: str, owner: str = "") -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ValidationError(f"{_where(owner)}{name} must be a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ValidationError(f"{_where(owner)}{name} must be finite, got {value!r}")
    return v


def check_int(value: Any, name: str, minimum: int | None = None, owner: str = "") -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValidationError(f"{_where(owner)}{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(f"{_where(owner)}{name} must be >= {minimum}, got {value!r}")
    return int(value)


def require_keys(record: Mapping, keys, what: str) -> None:
    if not isinstance(record, Mapping):
        raise ParseError(f"{what} must be a JSON object, got {type(record).__name__}")
    missing = [k for k in keys if k not in record]
    if missing:
        raise ParseError(f"{what} is missing field(s): {', '.join(missing)}")


def _where(owner: str) -> str:
    return f"{owner}: " if owner else ""


def check_bool(value: Any, name: str, owner: str = "") -> bool:
    if not isinstance(value, bool):
        raise ValidationError(f"{_where(owner)}{name} must be a boolean, got {value!r}")
    return value
