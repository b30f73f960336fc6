"""Fuse an OCR token stream with an extracted table into a :class:`ParsedChart`.

The table decides structure (which series and x position a number belongs
to); OCR decides digits. A numeric token is a candidate for a cell only if it
lies closest to that cell's row label on the canvas and, when the row shows one
token per cell, sits in the cell's left-to-right slot. Candidates within a
relative tolerance are then matched greedily over all (cell, token) pairs in
order of increasing relative distance, then token ``y0``, then token ``x0``,
then cell position.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional

from .chart import (
    CHART_TYPES,
    ZERO_NOISE,
    ChartSpec,
    ChartType,
    LinearTable,
    NoiseConfig,
    TokenKind,
    TokenStream,
    render_linearized_table,
    render_token_stream,
)
from .text import format_number

MATCH_TOLERANCE = 0.15


@dataclass(frozen=True)
class Pair:
    label: str
    x: str
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"pair value must be finite, got {self.value}")


@dataclass(frozen=True)
class ParsedChart:
    chart_type_hint: Optional[ChartType] = None
    legends: tuple[str, ...] = ()
    pairs: tuple[Pair, ...] = ()
    other_text: tuple[str, ...] = ()

    def __post_init__(self):
        if self.chart_type_hint is not None:
            object.__setattr__(self, "chart_type_hint", ChartType(self.chart_type_hint))
        object.__setattr__(self, "legends", tuple(self.legends))
        object.__setattr__(self, "pairs", tuple(self.pairs))
        object.__setattr__(self, "other_text", tuple(self.other_text))
        clash = set(self.legends) & set(self.other_text)
        if clash:
            raise ValueError(f"strings in both legends and other_text: {sorted(clash)}")

    def is_empty(self) -> bool:
        return not (self.legends or self.pairs or self.other_text or self.chart_type_hint)

    def to_dict(self) -> dict:
        return {
            "chart_type_hint": self.chart_type_hint.value if self.chart_type_hint else None,
            "legends": list(self.legends),
            "pairs": [{"label": p.label, "x": p.x, "value": p.value} for p in self.pairs],
            "other_text": list(self.other_text),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ParsedChart":
        return cls(
            chart_type_hint=doc.get("chart_type_hint"),
            legends=tuple(doc.get("legends", ())),
            pairs=tuple(Pair(p["label"], p["x"], float(p["value"])) for p in doc.get("pairs", ())),
            other_text=tuple(doc.get("other_text", ())),
        )


def _relative_distance(token_value: float, cell: float) -> float:
    if cell == 0.0:
        return 0.0 if token_value == 0.0 else math.inf
    return abs(token_value - cell) / abs(cell)


def _center(tok) -> tuple[float, float]:
    x0, y0, x1, y1 = tok.bbox
    return (x0 + x1) / 2, (y0 + y1) / 2


def _nearest_row(point: tuple[float, float], anchors: dict[int, tuple[float, float]]) -> Optional[int]:
    if not anchors:
        return None
    return min(anchors, key=lambda r: (math.dist(point, anchors[r]), r))


def _type_hint(text: str) -> Optional[ChartType]:
    t = text.strip().lower()
    for kw in CHART_TYPES:
        if t in (kw, f"{kw} chart"):
            return ChartType(kw)
    return None


def fuse_extractions(
    tokens: TokenStream, table: Optional[LinearTable], tolerance: float = MATCH_TOLERANCE
) -> ParsedChart:
    toks = list(tokens.tokens)
    header = list(table.header) if table is not None else []
    rows = list(table.rows) if table is not None else []

    # Tokens that spell a header or row label are structure, not values. One
    # token is reserved per label occurrence; numeric-looking labels (years)
    # take the lowest token on the canvas, where axis ticks live.
    label_counts = Counter(h for h in header if h) + Counter(lab for lab, _ in rows if lab)
    reserved: set[int] = set()
    for text, count in label_counts.items():
        candidates = [i for i, t in enumerate(toks) if t.text == text]
        candidates.sort(key=lambda i: (-toks[i].bbox[1], toks[i].bbox[0], i))
        reserved.update(candidates[:count])

    numeric = [
        (i, float(t.text))
        for i, t in enumerate(toks)
        if t.kind is TokenKind.NUMERIC and i not in reserved
    ]
    cells = [
        (r, c, v)
        for r, (_, row_cells) in enumerate(rows)
        for c, v in enumerate(row_cells)
        if v is not None and math.isfinite(v)
    ]

    # A number sits next to its row's label on the canvas, so each numeric
    # token belongs to the row whose label token is nearest. Rows whose label
    # was not seen accept any token.
    anchors: dict[int, tuple[float, float]] = {}
    for r, (lab, _) in enumerate(rows):
        hits = [i for i in reserved if toks[i].text == lab]
        if hits:
            anchors[r] = _center(toks[max(hits, key=lambda i: (toks[i].bbox[1], -i))])
    token_row = {ti: _nearest_row(_center(toks[ti]), anchors) for ti, _ in numeric}

    # Within a row, grouped labels run left to right in header order. When a
    # row shows exactly one token per cell, the k-th token from the left may
    # only fill the k-th cell.
    lane: dict[int, int] = {}
    cell_lane: dict[int, int] = {}
    for r in anchors:
        row_tokens = sorted(
            (ti for ti, _ in numeric if token_row[ti] == r), key=lambda ti: (_center(toks[ti])[0], ti)
        )
        row_cells = [ci for ci, cell in enumerate(cells) if cell[0] == r]
        if len(row_tokens) == len(row_cells) > 1:
            lane.update((ti, k) for k, ti in enumerate(row_tokens))
            cell_lane.update((ci, k) for k, ci in enumerate(row_cells))

    candidates = []
    for ci, (r, _, cell) in enumerate(cells):
        for ti, value in numeric:
            if r in anchors and token_row[ti] != r:
                continue
            if ci in cell_lane and lane.get(ti) != cell_lane[ci]:
                continue
            d = _relative_distance(value, cell)
            if d <= tolerance:
                bbox = toks[ti].bbox
                candidates.append((d, bbox[1], bbox[0], ci, ti, value))
    candidates.sort()
    assigned: dict[int, float] = {}
    used_tokens: set[int] = set()
    for _, _, _, ci, ti, value in candidates:
        if ci in assigned or ti in used_tokens:
            continue
        assigned[ci] = value
        used_tokens.add(ti)

    pairs = tuple(
        Pair(header[c + 1], rows[r][0], assigned.get(ci, v))
        for ci, (r, c, v) in enumerate(cells)
    )

    legends: list[str] = []
    for h in header[1:]:
        if h and h not in legends:
            legends.append(h)
    known = set(header) | {lab for lab, _ in rows} | set(legends)
    other: list[str] = []
    hint = None
    for i, t in enumerate(toks):
        if t.kind is not TokenKind.WORD:
            continue
        hint = hint or _type_hint(t.text)
        if i in reserved or t.text in known or t.text in other:
            continue
        other.append(t.text)
    return ParsedChart(hint, tuple(legends), pairs, tuple(other))


def to_prompt_block(parsed: ParsedChart) -> str:
    """``label | x | value`` lines, then ``LEGENDS:`` and ``TEXT:`` lines (items joined by "; ")."""
    if parsed.is_empty():
        return ""
    lines = [f"{p.label} | {p.x} | {format_number(p.value)}" for p in parsed.pairs]
    lines.append(("LEGENDS: " + "; ".join(parsed.legends)).rstrip())
    lines.append(("TEXT: " + "; ".join(parsed.other_text)).rstrip())
    return "\n".join(lines)


def parse_chart(spec: ChartSpec, noise: NoiseConfig = ZERO_NOISE, seed: int = 0) -> ParsedChart:
    """Render both extractor views of ``spec`` and fuse them."""
    return fuse_extractions(render_token_stream(spec, noise, seed), render_linearized_table(spec, noise, seed))
