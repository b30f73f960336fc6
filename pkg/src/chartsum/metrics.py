"""Automatic summary metrics and min-max normalized aggregation across systems.

All text is tokenized with :func:`chartsum.text.tokenize`.

* BLEU: corpus-level, modified n-gram precision up to 4-grams with brevity
  penalty, scaled to [0, 100]. A zero precision at any order makes the score
  0, as in standard corpus BLEU; ``smooth=True`` adds one to numerator and
  denominator for n >= 2 (the usual sentence-level variant).
* CIDEr: per item, the mean over n = 1..4 of the cosine between TF-IDF
  n-gram vectors of hypothesis and each reference (averaged over references),
  times 10. Document frequencies come from the reference sets. No length
  penalty or count clipping (this is CIDEr, not CIDEr-D).
* Content selection: recall of gold (label, x, value) facts. A fact counts
  as mentioned when its value appears as a number within 0.5% relative and
  its label or its x appears as a contiguous token run.
* Perplexity: order-3 add-k (Laplace) n-gram model with sentence-boundary
  markers, standing in for a neural scorer.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional, Protocol, Sequence, Union

from .text import format_number, numbers_in, tokenize

log = logging.getLogger(__name__)

CS_REL_TOL = 0.005
CIDER_SCALE = 10.0
BOS, EOS, UNK = "<s>", "</s>", "<unk>"


class LengthMismatch(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


class DegenerateColumn(ValueError):
    pass


class EmptyGoldWarning(UserWarning):
    pass


Refs = Union[str, Sequence[str]]


def _as_ref_lists(hypotheses: Sequence[str], references: Sequence[Refs]) -> list[list[str]]:
    if len(hypotheses) != len(references):
        raise LengthMismatch(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise EmptyCorpus("no hypotheses")
    out = []
    for r in references:
        refs = [r] if isinstance(r, str) else list(r)
        if not refs:
            raise EmptyCorpus("an item has no references")
        out.append(refs)
    return out


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# -- BLEU --------------------------------------------------------------------


def bleu(
    hypotheses: Sequence[str],
    references: Sequence[Refs],
    max_n: int = 4,
    smooth: bool = False,
) -> float:
    ref_lists = _as_ref_lists(hypotheses, references)
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, refs in zip(hypotheses, ref_lists):
        h = tokenize(hyp)
        rs = [tokenize(r) for r in refs]
        hyp_len += len(h)
        ref_len += min((abs(len(r) - len(h)), len(r)) for r in rs)[1]
        for n in range(1, max_n + 1):
            hc = ngram_counts(h, n)
            max_ref: Counter = Counter()
            for r in rs:
                max_ref |= ngram_counts(r, n)
            matches[n - 1] += sum(min(c, max_ref[g]) for g, c in hc.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    if hyp_len == 0:
        return 0.0
    log_precision = 0.0
    for n in range(max_n):
        m, t = matches[n], totals[n]
        if smooth and n > 0:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            log.debug("BLEU is 0: no matching %d-grams", n + 1)
            return 0.0
        log_precision += math.log(m / t)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_precision / max_n)


def sentence_bleu(hypothesis: str, references: Refs, max_n: int = 4) -> float:
    return bleu([hypothesis], [references], max_n=max_n, smooth=True)


# -- CIDEr -------------------------------------------------------------------


def _tfidf(counts: Counter, df: Counter, log_n: float) -> dict:
    return {g: c * (log_n - math.log(max(1.0, df[g]))) for g, c in counts.items()}


def _cosine(a: dict, b: dict) -> float:
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return sum(v * b.get(g, 0.0) for g, v in a.items()) / (na * nb)


def cider_scores(hypotheses: Sequence[str], references: Sequence[Refs], max_n: int = 4) -> list[float]:
    """Per-item CIDEr scores."""
    ref_lists = _as_ref_lists(hypotheses, references)
    ref_tokens = [[tokenize(r) for r in refs] for refs in ref_lists]
    df: Counter = Counter()
    for refs in ref_tokens:
        grams: set = set()
        for r in refs:
            for n in range(1, max_n + 1):
                grams.update(ngram_counts(r, n))
        df.update(grams)
    log_n = math.log(float(len(ref_lists)))
    scores = []
    for hyp, refs in zip(hypotheses, ref_tokens):
        h = tokenize(hyp)
        per_ref = []
        for r in refs:
            sims = [
                _cosine(_tfidf(ngram_counts(h, n), df, log_n), _tfidf(ngram_counts(r, n), df, log_n))
                for n in range(1, max_n + 1)
            ]
            per_ref.append(sum(sims) / max_n)
        scores.append(CIDER_SCALE * sum(per_ref) / len(per_ref))
    return scores


def cider(hypotheses: Sequence[str], references: Sequence[Refs], max_n: int = 4) -> float:
    scores = cider_scores(hypotheses, references, max_n)
    return sum(scores) / len(scores)


# -- content selection -------------------------------------------------------


@dataclass(frozen=True)
class GoldFact:
    label: str
    x: str
    value: float

    @classmethod
    def coerce(cls, f) -> "GoldFact":
        if isinstance(f, GoldFact):
            return f
        if isinstance(f, Mapping):
            return cls(str(f["label"]), str(f["x"]), float(f["value"]))
        label, x, value = f
        return cls(str(label), str(x), float(value))


def _contains_run(tokens: Sequence[str], run: Sequence[str]) -> bool:
    if not run:
        return False
    n = len(run)
    return any(list(tokens[i : i + n]) == list(run) for i in range(len(tokens) - n + 1))


def _value_mentioned(value: float, hyp_tokens: list[str], hyp_numbers: list[float]) -> bool:
    if format_number(value) in hyp_tokens:
        return True
    if value == 0.0:
        return 0.0 in hyp_numbers
    return any(abs(n - value) <= CS_REL_TOL * abs(value) for n in hyp_numbers)


def _mentioned(fact: GoldFact, tokens: list[str], numbers: list[float]) -> bool:
    if not _value_mentioned(fact.value, tokens, numbers):
        return False
    return _contains_run(tokens, tokenize(fact.label)) or _contains_run(tokens, tokenize(fact.x))


def fact_mentioned(hypothesis: str, fact) -> bool:
    return _mentioned(GoldFact.coerce(fact), tokenize(hypothesis), numbers_in(hypothesis))


def content_selection(hypothesis: str, gold_facts: Sequence) -> float:
    """Percentage of gold facts mentioned. No gold facts gives 100 with an EmptyGoldWarning."""
    if not gold_facts:
        warnings.warn("content selection with no gold facts is defined as 100", EmptyGoldWarning)
        return 100.0
    tokens = tokenize(hypothesis)
    numbers = numbers_in(hypothesis)
    hits = sum(_mentioned(GoldFact.coerce(f), tokens, numbers) for f in gold_facts)
    return 100.0 * hits / len(gold_facts)


# -- perplexity --------------------------------------------------------------


class PerplexityScorer(Protocol):
    def perplexity(self, texts: Sequence[str]) -> float: ...


class NGramLM:
    """Add-k smoothed n-gram model over a closed vocabulary (training words, ``</s>``, ``<unk>``)."""

    def __init__(self, order: int = 3, k: float = 1.0, vocab: Iterable[str] = ()):
        if order < 1:
            raise ValueError("order must be >= 1")
        if k <= 0:
            raise ValueError("smoothing constant must be > 0")
        self.order = order
        self.k = k
        self.vocab = frozenset(vocab) | {EOS, UNK}
        self.counts: dict[tuple, Counter] = {}
        self.context_totals: Counter = Counter()

    @classmethod
    def uniform(cls, words: Iterable[str], order: int = 1, k: float = 1.0) -> "NGramLM":
        """Untrained model: every context is uniform over the vocabulary."""
        return cls(order=order, k=k, vocab=words)

    def _padded(self, text: str) -> list[str]:
        toks = [t if t in self.vocab else UNK for t in tokenize(text)]
        return [BOS] * (self.order - 1) + toks + [EOS]

    def _events(self, text: str):
        padded = self._padded(text)
        for i in range(self.order - 1, len(padded)):
            yield tuple(padded[i - self.order + 1 : i]), padded[i]

    def fit(self, corpus: Sequence[str]) -> "NGramLM":
        for text in corpus:
            for ctx, w in self._events(text):
                self.counts.setdefault(ctx, Counter())[w] += 1
                self.context_totals[ctx] += 1
        return self

    def prob(self, word: str, context: Sequence[str]) -> float:
        ctx = tuple(context)[-(self.order - 1) :] if self.order > 1 else ()
        word = word if word in self.vocab else UNK
        c = self.counts.get(ctx, Counter())[word]
        return (c + self.k) / (self.context_totals[ctx] + self.k * len(self.vocab))

    def distribution(self, context: Sequence[str]) -> dict[str, float]:
        return {w: self.prob(w, context) for w in sorted(self.vocab)}

    def perplexity(self, texts: Sequence[str]) -> float:
        if not texts:
            raise EmptyCorpus("no texts to score")
        total_logprob = 0.0
        n = 0
        for text in texts:
            for ctx, w in self._events(text):
                total_logprob += math.log(self.prob(w, ctx))
                n += 1
        return math.exp(-total_logprob / n)


def train_lm(corpus: Sequence[str], order: int = 3, k: float = 1.0) -> NGramLM:
    if not corpus or not any(tokenize(t) for t in corpus):
        raise EmptyCorpus("training corpus is empty")
    vocab = {t for text in corpus for t in tokenize(text)}
    return NGramLM(order=order, k=k, vocab=vocab).fit(corpus)


def perplexity(texts: Sequence[str], lm: PerplexityScorer) -> float:
    return lm.perplexity(texts)


# -- normalized aggregation --------------------------------------------------


class Orientation(str, Enum):
    HIGHER_BETTER = "higher_better"
    LOWER_BETTER = "lower_better"


@dataclass(frozen=True)
class MetricColumn:
    system_names: tuple[str, ...]
    scores: tuple[float, ...]
    orientation: Orientation = Orientation.HIGHER_BETTER
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "system_names", tuple(self.system_names))
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        object.__setattr__(self, "orientation", Orientation(self.orientation))
        if len(self.system_names) != len(self.scores):
            raise LengthMismatch("system_names and scores differ in length")


def s_norm(column: MetricColumn) -> list[float]:
    """(S - S_worst) / (S_best - S_worst); best is the minimum for lower-is-better columns."""
    scores = column.scores
    if len(set(scores)) < 2:
        raise DegenerateColumn(f"column {column.name or '?'} needs at least two distinct scores")
    if column.orientation is Orientation.HIGHER_BETTER:
        best, worst = max(scores), min(scores)
    else:
        best, worst = min(scores), max(scores)
    return [(s - worst) / (best - worst) for s in scores]


def s_norm_aggregate(columns: Sequence[MetricColumn]) -> list[float]:
    """Per-system mean of the normalized columns."""
    if not columns:
        raise EmptyCorpus("no metric columns")
    names = columns[0].system_names
    for c in columns[1:]:
        if c.system_names != names:
            raise LengthMismatch("columns list different systems")
    normed = [s_norm(c) for c in columns]
    return [sum(col[i] for col in normed) / len(normed) for i in range(len(names))]


# -- reports -----------------------------------------------------------------


@dataclass
class MetricReport:
    bleu: float
    cider: float
    cs_percent: float
    ppl: float
    bleurt: Optional[float] = None
    s_norm: Optional[float] = None
    n_items: int = 0
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "bleu": self.bleu,
            "bleurt": self.bleurt,
            "cider": self.cider,
            "cs_percent": self.cs_percent,
            "ppl": self.ppl,
            "s_norm": self.s_norm,
            "n_items": self.n_items,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class EvalItem:
    id: str
    hypothesis: str
    references: tuple[str, ...]
    gold_facts: tuple[GoldFact, ...] = ()

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalItem":
        refs = doc["references"]
        if isinstance(refs, str):
            refs = [refs]
        return cls(
            id=str(doc["id"]),
            hypothesis=str(doc["hypothesis"]),
            references=tuple(refs),
            gold_facts=tuple(GoldFact.coerce(f) for f in doc.get("gold_facts", ())),
        )


def load_eval_manifest(path) -> list[EvalItem]:
    items = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                items.append(EvalItem.from_dict(json.loads(line)))
    return items


BleurtScorer = Callable[[Sequence[str], Sequence[Sequence[str]]], float]


def evaluate(
    items: Sequence[EvalItem],
    lm: Optional[PerplexityScorer] = None,
    bleurt_scorer: Optional[BleurtScorer] = None,
) -> MetricReport:
    """Score one system. Without ``lm``, the perplexity model is trained on the references."""
    if not items:
        raise EmptyCorpus("evaluation manifest is empty")
    hyps = [it.hypothesis for it in items]
    refs = [list(it.references) for it in items]
    notes = []
    cs_scores = []
    for it in items:
        if not it.gold_facts:
            notes.append(f"{it.id}: no gold facts, CS defined as 100")
            cs_scores.append(100.0)
        else:
            cs_scores.append(content_selection(it.hypothesis, it.gold_facts))
    if lm is None:
        lm = train_lm([r for rs in refs for r in rs])
    return MetricReport(
        bleu=bleu(hyps, refs),
        cider=cider(hyps, refs),
        cs_percent=sum(cs_scores) / len(cs_scores),
        ppl=lm.perplexity(hyps),
        bleurt=bleurt_scorer(hyps, refs) if bleurt_scorer else None,
        n_items=len(items),
        warnings=notes,
    )


REPORT_COLUMNS = (
    ("bleu", Orientation.HIGHER_BETTER),
    ("bleurt", Orientation.HIGHER_BETTER),
    ("cider", Orientation.HIGHER_BETTER),
    ("cs_percent", Orientation.HIGHER_BETTER),
    ("ppl", Orientation.LOWER_BETTER),
)


def snorm_table(reports: Mapping[str, MetricReport]) -> dict[str, float]:
    """Fill ``s_norm`` on each report from every metric all systems have; returns name -> s_norm.

    Columns where every system scores the same carry no ranking and are skipped.
    """
    names = tuple(reports)
    columns = []
    for attr, orientation in REPORT_COLUMNS:
        values = [getattr(reports[n], attr) for n in names]
        if any(v is None for v in values) or len(set(values)) < 2:
            continue
        columns.append(MetricColumn(names, values, orientation, attr))
    if not columns:
        raise DegenerateColumn("no metric separates the systems")
    agg = s_norm_aggregate(columns)
    for n, v in zip(names, agg):
        reports[n].s_norm = v
    return dict(zip(names, agg))
