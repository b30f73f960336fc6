"""Corpus tooling: synthetic chart corpora, manifests, validation, splits, QA pairs."""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

from .chart import ChartSpec, ChartType, MalformedSpec, InvalidSpec, Series, load_chart_spec, spec_pairs
from .cot import GenerationFailed
from .fusion import parse_chart
from .generation import (
    FACT_RE,
    ChartFacts,
    GenerationError,
    GenerationParams,
    Generator,
    MockGenerator,
    axes_sentence,
    caption_sentence,
    series_sentences,
    trend_sentences,
    type_sentence,
    verbalize,
)
from .retrieval import STAGES, LibraryEntry, Stage
from .rng import Rng

SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (0.8, 0.1, 0.1)


class InvalidRatios(ValueError):
    pass


class NoFacts(ValueError):
    pass


class ManifestFormatError(ValueError):
    pass


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str


@dataclass(frozen=True)
class ManifestEntry:
    chart_path: str
    summary: str
    split: Optional[str] = None
    qa: Optional[tuple[QAPair, ...]] = None

    def to_dict(self) -> dict:
        doc = {"chart_path": self.chart_path, "summary": self.summary, "split": self.split}
        doc["qa"] = None if self.qa is None else [{"question": q.question, "answer": q.answer} for q in self.qa]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ManifestEntry":
        unknown = set(doc) - {"chart_path", "summary", "split", "qa"}
        if unknown:
            raise ManifestFormatError(f"unknown manifest fields: {sorted(unknown)}")
        if not isinstance(doc.get("chart_path"), str) or not isinstance(doc.get("summary"), str):
            raise ManifestFormatError("chart_path and summary must be strings")
        qa = doc.get("qa")
        return cls(
            chart_path=doc["chart_path"],
            summary=doc["summary"],
            split=doc.get("split"),
            qa=None if qa is None else tuple(QAPair(p["question"], p["answer"]) for p in qa),
        )


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                entries.append(ManifestEntry.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ManifestFormatError(f"line {lineno}: {exc}") from exc
    return entries


def write_manifest(entries: Sequence[ManifestEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            f.write(json.dumps(e.to_dict(), ensure_ascii=False) + "\n")


# -- validation --------------------------------------------------------------


@dataclass
class EntryCheck:
    index: int
    chart_path: str
    reasons: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.reasons


@dataclass
class ValidationReport:
    entries: list[EntryCheck]

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    def failures(self) -> list[EntryCheck]:
        return [e for e in self.entries if not e.ok]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "entries": [
                {"index": e.index, "chart_path": e.chart_path, "ok": e.ok, "reasons": e.reasons}
                for e in self.entries
            ],
        }


def validate_manifest(entries: Sequence[ManifestEntry], base_dir: str | os.PathLike = ".") -> ValidationReport:
    """Structural checks only: summaries present, charts resolvable and valid, splits known."""
    base = Path(base_dir)
    checks = []
    for i, e in enumerate(entries):
        check = EntryCheck(i, e.chart_path)
        if not e.summary.strip():
            check.reasons.append("empty summary")
        path = base / e.chart_path
        if not e.chart_path or not path.is_file():
            check.reasons.append("missing chart")
        else:
            try:
                load_chart_spec(path)
            except (MalformedSpec, InvalidSpec) as exc:
                check.reasons.append(f"invalid chart: {exc}")
        if e.split is not None and e.split not in SPLITS:
            check.reasons.append(f"unknown split {e.split!r}")
        for qa in e.qa or ():
            if not qa.question.strip() or not qa.answer.strip():
                check.reasons.append("qa pair with empty question or answer")
                break
        checks.append(check)
    return ValidationReport(checks)


# -- splitting ---------------------------------------------------------------


def allocate(n: int, ratios: Sequence[float] = DEFAULT_RATIOS) -> tuple[int, ...]:
    """Largest-remainder allocation of n items; ties in the remainder go to the earlier split."""
    if len(ratios) != len(SPLITS):
        raise InvalidRatios(f"need {len(SPLITS)} ratios, got {len(ratios)}")
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidRatios(f"ratios must be positive and sum to 1, got {tuple(ratios)}")
    fracs = [Fraction(r).limit_denominator(10**9) for r in ratios]
    total = sum(fracs)
    quotas = [f / total * n for f in fracs]
    sizes = [int(q) for q in quotas]
    remainder = n - sum(sizes)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:remainder]:
        sizes[i] += 1
    return tuple(sizes)


def split_dataset(
    entries: Sequence[ManifestEntry], ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0
) -> list[ManifestEntry]:
    """Assign train/val/test by a seeded shuffle; entry order is preserved in the output."""
    sizes = allocate(len(entries), ratios)
    order = list(range(len(entries)))
    Rng(seed).split("split").shuffle(order)
    assignment = [""] * len(entries)
    pos = 0
    for name, size in zip(SPLITS, sizes):
        for i in order[pos : pos + size]:
            assignment[i] = name
        pos += size
    return [replace(e, split=s) for e, s in zip(entries, assignment)]


# -- QA pairs ----------------------------------------------------------------

QA_LINE_RE = re.compile(r"^\s*Q:\s*(.+?)\s*\|\s*A:\s*(.+?)\s*$")


def default_qa_filter(pairs: Sequence[QAPair]) -> list[QAPair]:
    """Drop empty answers and exact duplicates."""
    seen = set()
    out = []
    for p in pairs:
        key = (p.question.strip(), p.answer.strip())
        if not key[1] or not key[0] or key in seen:
            continue
        seen.add(key)
        out.append(QAPair(*key))
    return out


def generate_qa_pairs(
    summary: str,
    gen: Generator,
    n: int,
    qa_filter: Callable[[Sequence[QAPair]], list[QAPair]] = default_qa_filter,
) -> list[QAPair]:
    if not summary.strip():
        raise ValueError("summary is empty")
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(gen, MockGenerator):
        pairs = [
            QAPair(f"What is the value of {m.group('label')} at {m.group('x')}?", m.group("value"))
            for m in FACT_RE.finditer(summary)
        ]
        if not pairs:
            raise NoFacts("summary contains no extractable facts")
    else:
        prompt = (
            f"[QA] Write up to {n} question-answer pairs answerable from the chart summary below, "
            "one per line formatted as 'Q: <question> | A: <answer>'.\n"
            f"SUMMARY: {' '.join(summary.split())}"
        )
        try:
            text, _ = gen.generate(prompt, GenerationParams())
        except GenerationError as exc:
            raise GenerationFailed("qa", exc) from exc
        pairs = [QAPair(m.group(1), m.group(2)) for m in map(QA_LINE_RE.match, text.splitlines()) if m]
    return qa_filter(pairs)[:n]


# -- synthetic corpora -------------------------------------------------------

METRICS = ("Revenue", "Population", "Enrollment", "Exports", "Visitors", "Output", "Spending", "Emissions")
UNITS = ("million dollars", "thousands", "percent", "tonnes", "units")
PLACES = (
    "Ohio", "Texas", "Kenya", "Chile", "Norway", "Japan", "Peru", "Spain",
    "Ghana", "Nepal", "Italy", "Canada", "Brazil", "Poland",
)
SERIES_NAMES = ("Urban", "Rural", "Online", "Retail", "Public", "Private", "North", "South")
PIE_OPTIONS = ("Agree", "Disagree", "Unsure", "Often", "Rarely", "Never", "Refused")
SCATTER_X = ("Hours studied", "Distance travelled", "Ad budget", "Rainfall")


def _value(rng: Rng, base: float) -> float:
    return round(base * (0.3 + 1.7 * rng.uniform()), 1)


def _trend_values(rng: Rng, n: int, base: float) -> list[float]:
    direction = rng.choice((-1, 1, 1))
    step = 0.04 + 0.12 * rng.uniform()
    return [
        round(base * max(0.05, 1.0 + direction * step * j + 0.06 * (2 * rng.uniform() - 1)), 1)
        for j in range(n)
    ]


def _distinct(rng: Rng, pool: Sequence[str], k: int) -> list[str]:
    items = list(pool)
    rng.shuffle(items)
    return items[:k]


def synthetic_spec(chart_id: str, chart_type: ChartType, rng: Rng) -> ChartSpec:
    metric = rng.choice(METRICS)
    unit = rng.choice(UNITS)
    place = rng.choice(PLACES)
    base = float(rng.choice((10, 50, 100, 400, 1000, 5000)))
    y_label = f"{metric} ({unit})"
    if chart_type is ChartType.PIE:
        options = _distinct(rng, PIE_OPTIONS, rng.randint(3, 5))
        raw = [1 + rng.below(40) for _ in options]
        points = tuple((o, round(100.0 * r / sum(raw), 1)) for o, r in zip(options, raw))
        return ChartSpec(
            chart_id, chart_type, f"Survey responses in {place}", "category", "share of respondents",
            (Series("value", points),), (),
        )
    n_series = rng.randint(1, 2 if chart_type is ChartType.SCATTER else 3)
    names = _distinct(rng, SERIES_NAMES, n_series)
    if chart_type is ChartType.BAR:
        cats = _distinct(rng, [p for p in PLACES if p != place], rng.randint(3, 7))
        series = tuple(Series(s, tuple((c, _value(rng, base)) for c in cats)) for s in names)
        title, x_label = f"{metric} by region", "Region"
    elif chart_type is ChartType.LINE:
        start, step = rng.randint(1990, 2012), rng.choice((1, 2, 5))
        years = [start + step * j for j in range(rng.randint(4, 8))]
        series = tuple(
            Series(s, tuple(zip(years, _trend_values(rng, len(years), base)))) for s in names
        )
        title, x_label = f"{metric} in {place} from {years[0]} to {years[-1]}", "Year"
    else:
        x_name = rng.choice(SCATTER_X)
        xs = sorted({round(0.5 + 49.5 * rng.uniform(), 1) for _ in range(rng.randint(5, 8))})
        series = tuple(Series(s, tuple(zip(xs, _trend_values(rng, len(xs), base)))) for s in names)
        title, x_label = f"{metric} versus {x_name.lower()}", x_name
    legends = tuple(names) if n_series > 1 else ()
    return ChartSpec(chart_id, chart_type, title, x_label, y_label, series, legends)


def facts_from_spec(spec: ChartSpec) -> ChartFacts:
    return ChartFacts(spec.chart_type.value, spec.title, spec.y_label, spec_pairs(spec))


def gold_summary(spec: ChartSpec) -> str:
    return verbalize(facts_from_spec(spec))


def generate_synthetic_corpus(count: int, seed: int = 0) -> tuple[list[ChartSpec], list[ManifestEntry]]:
    """``count`` specs cycling bar, line, pie, scatter, each with a house-style gold summary."""
    if count < 1:
        raise ValueError("count must be >= 1")
    root = Rng(seed)
    types = list(ChartType)
    specs, manifest = [], []
    for i in range(count):
        spec = synthetic_spec(f"chart-{seed}-{i:05d}", types[i % len(types)], root.split(i))
        specs.append(spec)
        manifest.append(ManifestEntry(f"charts/{spec.id}.json", gold_summary(spec)))
    return specs, manifest


def stage_example_text(spec: ChartSpec, stage: Stage) -> str:
    facts = facts_from_spec(spec)
    stage = Stage(stage)
    if stage is Stage.CHART_TYPE:
        return type_sentence(facts)
    if stage is Stage.CAPTION:
        return caption_sentence(facts)
    if stage is Stage.AXES:
        return axes_sentence(facts)
    return " ".join(series_sentences(facts) or trend_sentences(facts)[:1])


def library_entries(specs: Sequence[ChartSpec], stages: Sequence[Stage] = STAGES) -> list[LibraryEntry]:
    """One example per (spec, stage), embedded from the zero-noise parse of the spec."""
    out = []
    for spec in specs:
        parsed = parse_chart(spec)
        for stage in stages:
            out.append(
                LibraryEntry(
                    id=f"{spec.id}:{Stage(stage).value}",
                    stage=Stage(stage),
                    text=stage_example_text(spec, stage),
                    parsed=parsed,
                    chart_type=spec.chart_type,
                    chart_ref=f"charts/{spec.id}.json",
                )
            )
    return out
