"""Chart data model, chart-spec documents, and simulated extractor outputs.

A :class:`ChartSpec` is the ground-truth stand-in for a chart image. Two
renderers turn it into what the extractors would see:

* :func:`render_token_stream` -- an OCR-like list of positioned text tokens;
* :func:`render_linearized_table` -- a table-extractor-like grid whose numeric
  cells may be corrupted.

Layout is a fixed 1000x1000 canvas (y grows downward): title top-center,
y-axis label at the left, x-axis label at the bottom, legends top-right, x
tick labels just above the x-axis label, and data labels above their points.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

from .rng import Rng
from .text import format_number, is_decimal, label_text

XValue = Union[str, int, float]

CANVAS = 1000.0
CHAR_W = 8.0
CHAR_H = 16.0
PLOT_LEFT, PLOT_RIGHT = 100.0, 900.0
PLOT_TOP, PLOT_BOTTOM = 100.0, 880.0


class ChartType(str, Enum):
    BAR = "bar"
    LINE = "line"
    PIE = "pie"
    SCATTER = "scatter"


CHART_TYPES = tuple(t.value for t in ChartType)


class MalformedSpec(ValueError):
    """The document is not parseable JSON of the expected top-level shape."""


class InvalidSpec(ValueError):
    """The document parsed but violates a ChartSpec invariant."""


@dataclass(frozen=True)
class Series:
    name: str
    points: tuple[tuple[XValue, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple((x, float(y)) for x, y in self.points))


@dataclass(frozen=True)
class ChartSpec:
    id: str
    chart_type: ChartType
    title: str
    x_label: str
    y_label: str
    series: tuple[Series, ...]
    legends: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "chart_type", ChartType(self.chart_type))
        object.__setattr__(self, "series", tuple(self.series))
        object.__setattr__(self, "legends", tuple(self.legends))
        validate_spec(self)


def validate_spec(spec: ChartSpec) -> None:
    if not spec.id:
        raise InvalidSpec("id must be nonempty")
    if not spec.series:
        raise InvalidSpec("chart must have at least one series")
    names = [s.name for s in spec.series]
    if any(not n for n in names):
        raise InvalidSpec("series names must be nonempty")
    if len(set(names)) != len(names):
        raise InvalidSpec("series names must be distinct")
    if spec.chart_type is ChartType.PIE and len(spec.series) != 1:
        raise InvalidSpec("pie charts have exactly one series")
    for s in spec.series:
        if not s.points:
            raise InvalidSpec(f"series {s.name!r} has no points")
        labels = [label_text(x) for x, _ in s.points]
        if any(not lab for lab in labels):
            raise InvalidSpec(f"series {s.name!r} has an empty x value")
        if len(set(labels)) != len(labels):
            raise InvalidSpec(f"x values within series {s.name!r} must be distinct")
        for x, y in s.points:
            if not isinstance(x, str) and not math.isfinite(x):
                raise InvalidSpec(f"series {s.name!r} has a non-finite x value")
            if not math.isfinite(y):
                raise InvalidSpec(f"series {s.name!r} has a non-finite y value")
            if spec.chart_type is ChartType.PIE and y < 0:
                raise InvalidSpec("pie chart values must be nonnegative")


# -- documents ---------------------------------------------------------------

_SPEC_FIELDS = {"id", "chart_type", "title", "x_label", "y_label", "series", "legends"}
_SERIES_FIELDS = {"name", "points"}


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def spec_from_dict(doc) -> ChartSpec:
    if not isinstance(doc, dict):
        raise MalformedSpec("chart spec must be a JSON object")
    unknown = set(doc) - _SPEC_FIELDS
    if unknown:
        raise InvalidSpec(f"unknown fields: {sorted(unknown)}")
    missing = _SPEC_FIELDS - set(doc)
    if missing:
        raise InvalidSpec(f"missing fields: {sorted(missing)}")
    for key in ("id", "title", "x_label", "y_label"):
        if not isinstance(doc[key], str):
            raise InvalidSpec(f"{key} must be a string")
    if doc["chart_type"] not in CHART_TYPES:
        raise InvalidSpec(f"chart_type must be one of {CHART_TYPES}")
    if not isinstance(doc["legends"], list) or not all(isinstance(s, str) for s in doc["legends"]):
        raise InvalidSpec("legends must be a list of strings")
    if not isinstance(doc["series"], list):
        raise InvalidSpec("series must be a list")
    series = []
    for s in doc["series"]:
        if not isinstance(s, dict):
            raise InvalidSpec("each series must be an object")
        if set(s) != _SERIES_FIELDS:
            raise InvalidSpec(f"series fields must be exactly {sorted(_SERIES_FIELDS)}")
        if not isinstance(s["name"], str) or not isinstance(s["points"], list):
            raise InvalidSpec("series name must be a string and points a list")
        points = []
        for p in s["points"]:
            if not (isinstance(p, list) and len(p) == 2):
                raise InvalidSpec("each point must be a two-element [x, y] array")
            x, y = p
            if not (isinstance(x, str) or _is_number(x)):
                raise InvalidSpec("point x must be a string or number")
            if not _is_number(y):
                raise InvalidSpec("point y must be a number")
            points.append((x, y))
        series.append(Series(s["name"], tuple(points)))
    return ChartSpec(
        id=doc["id"],
        chart_type=doc["chart_type"],
        title=doc["title"],
        x_label=doc["x_label"],
        y_label=doc["y_label"],
        series=tuple(series),
        legends=tuple(doc["legends"]),
    )


def parse_chart_spec(data: bytes | str) -> ChartSpec:
    try:
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        doc = json.loads(data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedSpec(str(exc)) from exc
    return spec_from_dict(doc)


def spec_to_dict(spec: ChartSpec) -> dict:
    return {
        "id": spec.id,
        "chart_type": spec.chart_type.value,
        "title": spec.title,
        "x_label": spec.x_label,
        "y_label": spec.y_label,
        "series": [
            {"name": s.name, "points": [[x, y] for x, y in s.points]} for s in spec.series
        ],
        "legends": list(spec.legends),
    }


def serialize_chart_spec(spec: ChartSpec) -> bytes:
    return json.dumps(spec_to_dict(spec), ensure_ascii=False, indent=2).encode("utf-8")


def load_chart_spec(path) -> ChartSpec:
    with open(path, "rb") as f:
        return parse_chart_spec(f.read())


# -- extractor outputs -------------------------------------------------------


class TokenKind(str, Enum):
    NUMERIC = "numeric"
    WORD = "word"


@dataclass(frozen=True)
class Token:
    text: str
    bbox: tuple[float, float, float, float]
    kind: TokenKind

    def __post_init__(self):
        object.__setattr__(self, "kind", TokenKind(self.kind))
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate bbox {self.bbox} for token {self.text!r}")
        if (self.kind is TokenKind.NUMERIC) != is_decimal(self.text):
            raise ValueError(f"token {self.text!r} has inconsistent kind {self.kind.value}")

    @classmethod
    def at(cls, text: str, cx: float, y0: float) -> "Token":
        """Token of ``text`` horizontally centred on ``cx``."""
        w = max(CHAR_W, CHAR_W * len(text))
        kind = TokenKind.NUMERIC if is_decimal(text) else TokenKind.WORD
        return cls(text, (cx - w / 2, y0, cx + w / 2, y0 + CHAR_H), kind)


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[Token, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def __iter__(self):
        return iter(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]


Cell = Optional[float]


@dataclass(frozen=True)
class LinearTable:
    header: tuple[str, ...]
    rows: tuple[tuple[str, tuple[Cell, ...]], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "header", tuple(self.header))
        object.__setattr__(self, "rows", tuple((lab, tuple(cells)) for lab, cells in self.rows))
        if not self.header:
            raise ValueError("table header must be nonempty")
        for lab, cells in self.rows:
            if len(cells) != len(self.header) - 1:
                raise ValueError(f"row {lab!r} has {len(cells)} cells, expected {len(self.header) - 1}")

    def cells(self) -> list[float]:
        return [c for _, cells in self.rows for c in cells if c is not None]


@dataclass(frozen=True)
class NoiseConfig:
    value_corruption_prob: float = 0.0
    value_corruption_scale: float = 0.0
    drop_token_prob: float = 0.0

    def __post_init__(self):
        for name in ("value_corruption_prob", "drop_token_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.value_corruption_scale < 0:
            raise ValueError("value_corruption_scale must be >= 0")


ZERO_NOISE = NoiseConfig()


def x_order(spec: ChartSpec) -> list[str]:
    """Distinct x labels in order of first appearance (series order, then point order)."""
    seen: dict[str, None] = {}
    for s in spec.series:
        for x, _ in s.points:
            seen.setdefault(label_text(x), None)
    return list(seen)


def spec_pairs(spec: ChartSpec) -> list[tuple[str, str, float]]:
    """Ground-truth (series, x, y) triples in table row-major order."""
    lookup = {(s.name, label_text(x)): y for s in spec.series for x, y in s.points}
    out = []
    for x in x_order(spec):
        for s in spec.series:
            if (s.name, x) in lookup:
                out.append((s.name, x, lookup[(s.name, x)]))
    return out


def _label_texts(spec: ChartSpec) -> list[str]:
    names = list(spec.legends)
    names += [s.name for s in spec.series if s.name not in names]
    return names


def _layout(spec: ChartSpec) -> list[Token]:
    tokens: list[Token] = []
    if spec.title:
        tokens.append(Token.at(spec.title, CANVAS / 2, 20.0))
    if spec.y_label:
        half = max(CHAR_W, CHAR_W * len(spec.y_label)) / 2
        tokens.append(Token.at(spec.y_label, 10.0 + half, 480.0))
    if spec.x_label:
        tokens.append(Token.at(spec.x_label, CANVAS / 2, 960.0))
    for i, name in enumerate(_label_texts(spec)):
        tokens.append(Token.at(name, 900.0, 50.0 + 20.0 * i))

    xs = x_order(spec)
    all_y = [y for s in spec.series for _, y in s.points]
    if spec.chart_type is ChartType.PIE:
        total = sum(all_y) or 1.0
        acc = 0.0
        for (x, y) in spec.series[0].points:
            mid = 2 * math.pi * (acc + y / 2) / total
            acc += y
            cx, cy = 500 + 320 * math.sin(mid), 500 - 320 * math.cos(mid)
            tokens.append(Token.at(label_text(x), cx, cy - CHAR_H))
            tokens.append(Token.at(format_number(y), cx, cy + 2.0))
        return tokens

    col_w = (PLOT_RIGHT - PLOT_LEFT) / len(xs)
    col = {x: PLOT_LEFT + (j + 0.5) * col_w for j, x in enumerate(xs)}
    for x in xs:
        tokens.append(Token.at(x, col[x], 920.0))
    lo, hi = min(all_y), max(all_y)
    span = hi - lo or 1.0
    n_series = len(spec.series)
    for si, s in enumerate(spec.series):
        offset = (si - (n_series - 1) / 2) * col_w / max(n_series, 1) * 0.8
        for x, y in s.points:
            py = PLOT_BOTTOM - (PLOT_BOTTOM - PLOT_TOP) * (y - lo) / span
            tokens.append(Token.at(format_number(y), col[label_text(x)] + offset, py - CHAR_H - 2.0))
    return tokens


def render_token_stream(spec: ChartSpec, noise: NoiseConfig = ZERO_NOISE, seed: int = 0) -> TokenStream:
    """OCR-like view of the chart. Only non-title tokens are ever dropped."""
    tokens = _layout(spec)
    if noise.drop_token_prob <= 0.0:
        return TokenStream(tuple(tokens))
    rng = Rng(seed).split("ocr")
    kept = []
    for i, tok in enumerate(tokens):
        is_title = i == 0 and spec.title and tok.text == spec.title
        if is_title or rng.split(i).uniform() >= noise.drop_token_prob:
            kept.append(tok)
    return TokenStream(tuple(kept))


def render_linearized_table(
    spec: ChartSpec, noise: NoiseConfig = ZERO_NOISE, seed: int = 0
) -> LinearTable:
    """Table-extractor-like view. Corruption multiplies a cell by (1 + delta), |delta| <= scale."""
    header = (spec.x_label, *(s.name for s in spec.series))
    lookup = [{label_text(x): y for x, y in s.points} for s in spec.series]
    rng = Rng(seed).split("table")
    rows = []
    for r, x in enumerate(x_order(spec)):
        cells: list[Cell] = []
        for c, values in enumerate(lookup):
            v = values.get(x)
            if v is not None and noise.value_corruption_prob > 0.0:
                cell_rng = rng.split(f"{r}:{c}")
                if cell_rng.uniform() < noise.value_corruption_prob:
                    delta = noise.value_corruption_scale * (2.0 * cell_rng.uniform() - 1.0)
                    v = v * (1.0 + delta)
            cells.append(v)
        rows.append((x, tuple(cells)))
    return LinearTable(header, tuple(rows))
