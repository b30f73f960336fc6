"""Text utilities shared by every module: one tokenizer, one number format, one hash."""

from __future__ import annotations

import math
import re

import numpy as np

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

# Numbers keep their internal decimal point / thousands commas; every other
# punctuation character becomes its own token.
_TOKEN_RE = re.compile(r"\d+(?:[.,]\d+)*|\w+|[^\w\s]", re.UNICODE)
_DECIMAL_RE = re.compile(r"^-?\d+(?:\.\d+)?$")
_NUMBER_IN_TEXT_RE = re.compile(r"(?<![\w.])-?\d+(?:,\d{3})*(?:\.\d+)?")


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET_BASIS
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, split punctuation into separate tokens.

    >>> tokenize("Summarize the chart.")
    ['summarize', 'the', 'chart', '.']
    """
    return _TOKEN_RE.findall(text.lower())


def format_number(value: float | int) -> str:
    """Shortest decimal string that round-trips a float64; no exponent, no separators."""
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, int):
        return str(value)
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {value!r}")
    if v == 0.0:
        return "0"
    return np.format_float_positional(v, unique=True, trim="-")


def is_decimal(text: str) -> bool:
    return bool(_DECIMAL_RE.match(text))


def numbers_in(text: str) -> list[float]:
    """All decimal numbers appearing in free text (thousands commas allowed)."""
    return [float(m.group().replace(",", "")) for m in _NUMBER_IN_TEXT_RE.finditer(text)]


def label_text(x: str | int | float) -> str:
    """String form of an x value or label as it appears in tables and tokens."""
    if isinstance(x, str):
        return x
    return format_number(x)
