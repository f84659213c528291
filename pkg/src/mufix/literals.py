"""Literal parsing and tolerant comparison.

Expected outputs arrive as source text (from embedded tests, model output,
or recorded traces). Comparison is structural on parsed values: numeric
kinds match across int/float, strings never match numbers, bool is its own
kind, and list vs tuple are distinct. When either side fails to parse, the
fallback is exact comparison of the whitespace-trimmed text. The relation
is an equivalence relation, which the property tests rely on.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from fractions import Fraction


@dataclass(frozen=True)
class NormalizedLiteral:
    """A literal's stripped source text plus its parsed value, if any."""

    raw: str
    value: object
    parsed: bool


def normalize_literal(text: str) -> NormalizedLiteral:
    """Strip and parse a literal; unparseable text keeps only its raw form."""
    raw = text.strip()
    try:
        value = ast.literal_eval(raw)
    except (ValueError, SyntaxError, TypeError, MemoryError, RecursionError):
        return NormalizedLiteral(raw=raw, value=None, parsed=False)
    return NormalizedLiteral(raw=raw, value=value, parsed=True)


def _canon_number(value) -> tuple:
    # Fraction(float) is exact, so 1 and 1.0 share one canonical form while
    # 0.1 and Fraction(1, 10) would not.
    if isinstance(value, float):
        if math.isnan(value):
            return ("num", "nan")
        if math.isinf(value):
            return ("num", "+inf" if value > 0 else "-inf")
    return ("num", Fraction(value))


def _canon(value) -> tuple:
    """Canonical hashable form; equal forms define the match relation."""
    if value is None:
        return ("none",)
    if isinstance(value, bool):
        return ("bool", value)
    if isinstance(value, (int, float)):
        return _canon_number(value)
    if isinstance(value, complex):
        return ("complex", _canon_number(value.real), _canon_number(value.imag))
    if isinstance(value, str):
        return ("str", value)
    if isinstance(value, bytes):
        return ("bytes", value)
    if isinstance(value, list):
        return ("list", tuple(_canon(item) for item in value))
    if isinstance(value, tuple):
        return ("tuple", tuple(_canon(item) for item in value))
    if isinstance(value, (set, frozenset)):
        return ("set", frozenset(_canon(item) for item in value))
    if isinstance(value, dict):
        return ("dict", frozenset((_canon(k), _canon(v)) for k, v in value.items()))
    # literal_eval cannot produce anything else, but stay total.
    return ("opaque", repr(value))


def literals_match(a: NormalizedLiteral, b: NormalizedLiteral) -> bool:
    """Structural match when both sides parsed, raw-text match otherwise."""
    if a.parsed and b.parsed:
        return _canon(a.value) == _canon(b.value)
    return a.raw == b.raw


def match_literal_texts(a_text: str, b_text: str) -> bool:
    """Convenience wrapper: normalize both texts and compare."""
    return literals_match(normalize_literal(a_text), normalize_literal(b_text))
