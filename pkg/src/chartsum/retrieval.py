"""Staged example library with exact cosine top-k retrieval and 1/rank weights."""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Union

import numpy as np

from .chart import ChartType
from .embedding import DEFAULT_DIM, FeatureVector, ZeroVector, embed_chart, normalize
from .fusion import ParsedChart

DEFAULT_K = 3
DEFAULT_PER_STAGE = 250


class Stage(str, Enum):
    CHART_TYPE = "ChartType"
    CAPTION = "Caption"
    AXES = "Axes"
    TREND = "Trend"


STAGES = tuple(Stage)


class DuplicateId(ValueError):
    pass


class LibraryFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ContextExample:
    id: str
    stage: Stage
    feature: FeatureVector
    example_text: str
    chart_ref: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "stage", Stage(self.stage))
        if not self.example_text:
            raise ValueError(f"example {self.id!r} has empty text")
        feature = np.array(self.feature, dtype=np.float64)
        if abs(np.linalg.norm(feature) - 1.0) > 1e-9:
            raise ValueError(f"example {self.id!r} feature is not unit-normalized")
        feature.flags.writeable = False
        object.__setattr__(self, "feature", feature)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "stage": self.stage.value,
            "feature": self.feature.tolist(),
            "example_text": self.example_text,
            "chart_ref": self.chart_ref,
        }


@dataclass(frozen=True, eq=False)
class ContextLibrary:
    examples: tuple[ContextExample, ...]
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        seen: set[str] = set()
        index: dict[Stage, list[ContextExample]] = {s: [] for s in STAGES}
        for ex in self.examples:
            if ex.id in seen:
                raise DuplicateId(ex.id)
            seen.add(ex.id)
            index[ex.stage].append(ex)
        object.__setattr__(self, "index", {s: tuple(v) for s, v in index.items()})

    def stage(self, stage: Stage) -> tuple[ContextExample, ...]:
        return self.index[Stage(stage)]

    def __len__(self):
        return len(self.examples)


@dataclass(frozen=True)
class RankedExample:
    example: ContextExample
    similarity: float
    rank: int

    @property
    def weight(self) -> float:
        return 1.0 / self.rank


@dataclass(frozen=True, eq=False)
class WeightedContext:
    """Example texts with their 1/rank weights, plus the rank-weighted feature sum."""

    texts: tuple[tuple[str, float], ...]
    ids: tuple[str, ...]
    aggregate: np.ndarray


def cosine_similarity(a: FeatureVector, b: FeatureVector) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    return float(min(1.0, max(-1.0, float(a @ b) / (na * nb))))


def retrieve_top_k(
    lib: ContextLibrary, stage: Stage, query: FeatureVector, k: int = DEFAULT_K
) -> list[RankedExample]:
    """The k most similar examples of one stage; ties go to the smaller id."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if not np.any(query):
        raise ZeroVector("query vector is zero")
    scored = ((cosine_similarity(ex.feature, query), ex) for ex in lib.stage(stage))
    best = heapq.nsmallest(k, scored, key=lambda se: (-se[0], se[1].id))
    return [RankedExample(ex, sim, rank) for rank, (sim, ex) in enumerate(best, start=1)]


def rank_weights(n: int) -> list[float]:
    if n < 0:
        raise ValueError("n must be >= 0")
    return [1.0 / i for i in range(1, n + 1)]


def weighted_context(ranked: list[RankedExample], dim: int = DEFAULT_DIM) -> WeightedContext:
    if not ranked:
        return WeightedContext((), (), np.zeros(dim))
    weights = rank_weights(len(ranked))
    aggregate = np.zeros_like(ranked[0].example.feature)
    for w, r in zip(weights, ranked):
        aggregate = aggregate + w * r.example.feature
    return WeightedContext(
        tuple((r.example.example_text, w) for w, r in zip(weights, ranked)),
        tuple(r.example.id for r in ranked),
        aggregate,
    )


@dataclass(frozen=True)
class LibraryEntry:
    id: str
    stage: Stage
    text: str
    parsed: ParsedChart
    chart_type: Optional[ChartType] = None
    chart_ref: Optional[str] = None


EntryLike = Union[LibraryEntry, tuple]


def build_library(
    entries: Iterable[EntryLike],
    dim: int = DEFAULT_DIM,
    per_stage: Optional[int] = None,
) -> ContextLibrary:
    """Embed and index entries. ``(stage, text, parsed)`` tuples get ids ``<stage>-<n>``.

    ``per_stage`` caps how many entries each stage keeps (first come, first
    kept); the reference setup uses 250 per stage.
    """
    examples = []
    counts = {s: 0 for s in STAGES}
    seen: set[str] = set()
    for n, entry in enumerate(entries):
        if not isinstance(entry, LibraryEntry):
            stage, text, parsed = entry
            entry = LibraryEntry(f"{Stage(stage).value}-{n}", Stage(stage), text, parsed)
        stage = Stage(entry.stage)
        if entry.id in seen:
            raise DuplicateId(entry.id)
        seen.add(entry.id)
        if per_stage is not None and counts[stage] >= per_stage:
            continue
        vec = embed_chart(entry.parsed, entry.chart_type, dim=dim)
        if not vec.any():
            raise ZeroVector(f"entry {entry.id!r} has nothing to embed")
        examples.append(ContextExample(entry.id, stage, normalize(vec), entry.text, entry.chart_ref))
        counts[stage] += 1
    return ContextLibrary(tuple(examples))


def save_library(lib: ContextLibrary, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in lib.examples:
            f.write(json.dumps(ex.to_dict(), ensure_ascii=False) + "\n")


def load_library(path, tolerance: float = 1e-6) -> ContextLibrary:
    """Read a JSON-lines library; features must be unit norm within ``tolerance``."""
    examples = []
    dim = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                feature = np.asarray(doc["feature"], dtype=np.float64)
                stage = Stage(doc["stage"])
                ex_id, text = doc["id"], doc["example_text"]
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise LibraryFormatError(f"line {lineno}: {exc}") from exc
            if feature.ndim != 1 or not np.all(np.isfinite(feature)):
                raise LibraryFormatError(f"line {lineno}: feature must be a finite 1-d array")
            if dim is not None and feature.shape[0] != dim:
                raise LibraryFormatError(f"line {lineno}: feature dimension {feature.shape[0]} != {dim}")
            dim = feature.shape[0]
            norm = float(np.linalg.norm(feature))
            if not math.isclose(norm, 1.0, abs_tol=tolerance):
                raise LibraryFormatError(f"line {lineno}: feature norm {norm} is not 1")
            examples.append(ContextExample(ex_id, stage, feature / norm, text, doc.get("chart_ref")))
    return ContextLibrary(tuple(examples))
