"""Deterministic reference encoders for charts and prompts.

Chart features are laid out in three groups:

    [0, 4)     one-hot chart type (bar, line, pie, scatter)
    [4, 20)    four slots of per-series trend statistics
               (present, slope sign, normalized range, monotonicity)
    [20, dim)  FNV-1a hashed character 3-gram counts of title, labels, legends

Each nonempty group is scaled to unit norm times its weight in
``GROUP_WEIGHTS`` before the whole vector is normalized. Scaling groups
separately keeps a change confined to one group (a different title, say)
from leaking into the coordinates of the others, and the heavier type weight
makes same-type charts outrank every different-type chart.

Any other encoder can stand in for this one as long as it returns finite
float64 vectors of a fixed dimension.
"""

from __future__ import annotations

from typing import Optional, Protocol

import numpy as np

from .chart import ChartType
from .fusion import ParsedChart
from .text import fnv1a64, is_decimal, tokenize

DEFAULT_DIM = 256
TYPE_DIMS = slice(0, 4)
TREND_DIMS = slice(4, 20)
HASH_START = 20
MAX_SERIES = 4
GROUP_WEIGHTS = {"type": 2.0, "trend": 1.0, "text": 1.0}
_TYPE_INDEX = {t: i for i, t in enumerate(ChartType)}

FeatureVector = np.ndarray


class ZeroVector(ValueError):
    pass


class EmptyPrompt(ValueError):
    pass


class ChartEmbedder(Protocol):
    dim: int

    def __call__(self, parsed: ParsedChart, spec_type: Optional[ChartType] = None) -> FeatureVector: ...


def normalize(v: FeatureVector) -> FeatureVector:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("feature vector has non-finite entries")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ZeroVector("cannot normalize the zero vector")
    return v / norm


def trend_direction(values: list[float], xs: Optional[list[float]] = None) -> int:
    """Sign of the least-squares slope: +1, -1, or 0 when flat relative to the data scale."""
    n = len(values)
    if n < 2:
        return 0
    t = np.asarray(xs if xs is not None else range(n), dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    tc = t - t.mean()
    denom = float(tc @ tc)
    if denom == 0.0:
        return 0
    slope = float(tc @ (y - y.mean())) / denom
    scale = float(np.max(np.abs(y)))
    if abs(slope) * float(t.max() - t.min()) <= 1e-9 * scale or scale == 0.0:
        return 0
    return 1 if slope > 0 else -1


def series_of(parsed: ParsedChart) -> dict[str, list[tuple[str, float]]]:
    """Pairs grouped by label, first-seen label order, pair order within each label."""
    out: dict[str, list[tuple[str, float]]] = {}
    for p in parsed.pairs:
        out.setdefault(p.label, []).append((p.x, p.value))
    return out


def numeric_xs(points: list[tuple[str, float]]) -> Optional[list[float]]:
    if points and all(is_decimal(x) for x, _ in points):
        return [float(x) for x, _ in points]
    return None


def trend_stats(points: list[tuple[str, float]]) -> tuple[float, float, float, float]:
    values = [v for _, v in points]
    lo, hi = min(values), max(values)
    top = max(abs(lo), abs(hi))
    norm_range = (hi - lo) / top if top > 0 else 0.0
    if len(values) > 1:
        steps = np.sign(np.diff(values))
        mono = float(steps.sum()) / (len(values) - 1)
    else:
        mono = 0.0
    return 1.0, float(trend_direction(values, numeric_xs(points))), norm_range, mono


def _char_trigrams(text: str) -> list[str]:
    t = text.lower()
    if len(t) < 3:
        return [t] if t else []
    return [t[i : i + 3] for i in range(len(t) - 2)]


def _unit(block: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(block)
    return block / n if n > 0 else block


def embed_chart(
    parsed: ParsedChart, spec_type: Optional[ChartType] = None, dim: int = DEFAULT_DIM
) -> FeatureVector:
    """Unit-norm feature vector, or the zero vector when there is nothing to encode."""
    if dim <= HASH_START:
        raise ValueError(f"dim must exceed {HASH_START}")
    v = np.zeros(dim, dtype=np.float64)

    chart_type = spec_type if spec_type is not None else parsed.chart_type_hint
    if chart_type is not None:
        v[_TYPE_INDEX[ChartType(chart_type)]] = GROUP_WEIGHTS["type"]

    trend = np.zeros(TREND_DIMS.stop - TREND_DIMS.start)
    for slot, points in enumerate(list(series_of(parsed).values())[:MAX_SERIES]):
        trend[4 * slot : 4 * slot + 4] = trend_stats(points)
    v[TREND_DIMS] = GROUP_WEIGHTS["trend"] * _unit(trend)

    text = np.zeros(dim - HASH_START)
    for s in (*parsed.other_text, *parsed.legends):
        for gram in _char_trigrams(s):
            text[fnv1a64(gram.encode("utf-8")) % (dim - HASH_START)] += 1.0
    v[HASH_START:] = GROUP_WEIGHTS["text"] * _unit(text)

    if not v.any():
        return v
    return normalize(v)


def embed_text(prompt: str) -> list[str]:
    tokens = tokenize(prompt)
    if not tokens:
        raise EmptyPrompt("prompt has no tokens")
    return tokens
