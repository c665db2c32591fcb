"""Text form of exact rationals ("p/q") and JSON conversion."""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Any

_RATIONAL = re.compile(r"^-?\d+(?:/\d+)?$")


def parse_rational(text: Any) -> Fraction:
    """Parse ``"p/q"`` or an integer string; integers are accepted as-is.

    Decimal notation is rejected so files stay exact.
    """
    if isinstance(text, bool):
        raise ValueError(f"not a rational: {text!r}")
    if isinstance(text, int):
        return Fraction(text)
    if not isinstance(text, str) or not _RATIONAL.match(text.strip()):
        raise ValueError(f"not a rational of the form 'p/q': {text!r}")
    value = Fraction(text.strip())
    return value


def format_rational(value: Fraction | int) -> str:
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


def to_jsonable(obj: Any) -> Any:
    """Recursively turn Fractions into "p/q" strings and tuples into lists."""
    if isinstance(obj, Fraction):
        return format_rational(obj)
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, str) else k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if hasattr(obj, "to_json"):
        return obj.to_json()
    return obj
