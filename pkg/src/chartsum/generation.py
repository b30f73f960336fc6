"""Text generators: a deterministic template generator and an HTTP chat client.

The mock generator reads everything it needs from the prompt (stage marker,
``label | x | value`` lines, ``TEXT:`` line, weighted examples, prior
thoughts), so a pipeline run with it is a pure function of its inputs. It
also carries a small probabilistic model -- a smoothed unigram over a fixed
template vocabulary plus the prompt's own tokens, with counts updated by the
tokens generated so far -- under which every output is scored token by token.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Protocol, Sequence

import httpx

from .chart import CHART_TYPES
from .embedding import EmptyPrompt, numeric_xs, trend_direction
from .text import format_number, tokenize

log = logging.getLogger(__name__)

API_KEY_ENV = "CHARTTHINKER_API_KEY"
UNK = "<unk>"


class GenerationError(RuntimeError):
    pass


class EndpointError(GenerationError):
    def __init__(self, status: Optional[int], body: str = ""):
        self.status = status
        self.body = body[:200]
        super().__init__(f"endpoint returned status {status}: {self.body}")


class GenerationTimeout(GenerationError):
    pass


@dataclass(frozen=True)
class GenerationParams:
    max_tokens: int = 256
    temperature: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class GenerationTrace:
    tokens: tuple[str, ...]
    stepwise_logprobs: tuple[float, ...]
    total_logprob: float

    def __post_init__(self):
        if len(self.tokens) != len(self.stepwise_logprobs):
            raise ValueError("tokens and stepwise_logprobs differ in length")
        if abs(self.total_logprob - sum(self.stepwise_logprobs)) > 1e-9:
            raise ValueError("total_logprob is not the sum of stepwise log-probabilities")


class Generator(Protocol):
    generator_id: str
    supports_concurrency: bool
    max_concurrency: int
    merges_locally: bool

    def generate(self, prompt: str, params: GenerationParams) -> tuple[str, Optional[GenerationTrace]]: ...


# -- verbalization -----------------------------------------------------------


@dataclass
class ChartFacts:
    """What a summary can talk about: chart type, title, y label, and (label, x, value) triples."""

    chart_type: Optional[str] = None
    title: str = ""
    y_label: str = ""
    pairs: list[tuple[str, str, float]] = field(default_factory=list)

    def series(self) -> dict[str, list[tuple[str, float]]]:
        out: dict[str, list[tuple[str, float]]] = {}
        for label, x, v in self.pairs:
            out.setdefault(label, []).append((x, v))
        return out


def fact_sentence(label: str, x: str, value: float) -> str:
    return f"For {x}, {label} was {format_number(value)}."


FACT_RE = re.compile(
    r"For (?P<x>[^,]+), (?P<label>[^.]+?) was (?P<value>-?\d+(?:\.\d+)?)(?=\.(?:\s|$))"
)

TREND_WORDS = {1: "increasing", -1: "decreasing", 0: "stable"}


def type_sentence(facts: ChartFacts) -> str:
    if facts.chart_type:
        return f"This is a {facts.chart_type} chart."
    return "This is a chart."


def caption_sentence(facts: ChartFacts) -> str:
    if facts.title:
        return f"The chart shows {facts.title}."
    return "The chart shows the underlying data."


def axes_sentence(facts: ChartFacts) -> str:
    xs = list(dict.fromkeys(x for _, x, _ in facts.pairs))
    y = facts.y_label or "the values"
    if facts.chart_type == "pie":
        return f"The chart divides {y} across {len(xs)} categories."
    if not xs:
        return f"The vertical axis shows {y}."
    return f"The horizontal axis runs from {xs[0]} to {xs[-1]}, and the vertical axis shows {y}."


def series_sentences(facts: ChartFacts) -> list[str]:
    """Trend, extremes, or shares per series, without per-point data sentences."""
    out = []
    for label, points in facts.series().items():
        values = [v for _, v in points]
        if facts.chart_type == "pie":
            hi = max(points, key=lambda p: p[1])
            lo = min(points, key=lambda p: p[1])
            out.append(f"The largest share is {hi[0]} with {format_number(hi[1])}.")
            if len(points) > 1:
                out.append(f"The smallest share is {lo[0]} with {format_number(lo[1])}.")
        elif len(points) > 1:
            (x0, v0), (xn, vn) = points[0], points[-1]
            word = TREND_WORDS[trend_direction(values, numeric_xs(points))]
            span = f"from {format_number(v0)} in {x0} to {format_number(vn)} in {xn}"
            if word == "stable":
                out.append(f"{label} stays stable overall, {span}.")
            else:
                out.append(f"{label} shows an overall {word} trend, {span}.")
            if len(points) > 2:
                hi = max(points, key=lambda p: p[1])
                lo = min(points, key=lambda p: p[1])
                out.append(
                    f"The highest value of {label} is {format_number(hi[1])} in {hi[0]}, "
                    f"and the lowest is {format_number(lo[1])} in {lo[0]}."
                )
    return out


def trend_sentences(facts: ChartFacts) -> list[str]:
    return series_sentences(facts) + [fact_sentence(*p) for p in facts.pairs]


STAGE_VERBALIZERS: dict[str, Callable[[ChartFacts], list[str]]] = {
    "ChartType": lambda f: [type_sentence(f)],
    "Caption": lambda f: [caption_sentence(f)],
    "Axes": lambda f: [axes_sentence(f)],
    "Trend": trend_sentences,
}


def verbalize(facts: ChartFacts) -> str:
    """Full house-style summary: type, caption, axes, trend and data sentences."""
    sentences: list[str] = []
    for fn in STAGE_VERBALIZERS.values():
        sentences.extend(fn(facts))
    return " ".join(sentences)


# -- mock generator ----------------------------------------------------------

STAGE_RE = re.compile(r"^\[STAGE (\w+)\]")
EXAMPLE_RE = re.compile(r"^EXAMPLE \(w=1(?:/(\d+))?\): (.*)$")
PAIR_RE = re.compile(r"^(.+?) \| (.+?) \| (-?\d+(?:\.\d+)?)$")
TYPE_RE = re.compile(r"This is an? (" + "|".join(CHART_TYPES) + r") chart")
INTEGRATE_MARKER = "[INTEGRATE]"
THOUGHT_RE = re.compile(r"^THOUGHT \((\w+)\): (.*)$")

BASE_VOCAB = sorted(
    set(
        tokenize(
            "this is a an bar line pie scatter chart . , the shows underlying data horizontal "
            "vertical axis runs from to and values divides across categories largest smallest "
            "share with overall increasing decreasing stable stays trend in highest value of "
            "lowest for was"
        )
    )
    | {UNK}
)

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_SPLIT.split(text.strip()) if s.strip()]


def dedup_sentences(texts: Iterable[str]) -> list[str]:
    seen: dict[str, None] = {}
    for t in texts:
        for s in split_sentences(t):
            seen.setdefault(s, None)
    return list(seen)


def facts_from_prompt(prompt: str) -> ChartFacts:
    lines = prompt.splitlines()
    facts = ChartFacts()
    text_items: list[str] = []
    votes: Counter = Counter()
    prior_type = None
    for line in lines:
        m = PAIR_RE.match(line)
        if m and not line.startswith(("EXAMPLE", "SO FAR:")):
            facts.pairs.append((m.group(1), m.group(2), float(m.group(3))))
            continue
        if line.startswith("TEXT:"):
            body = line[len("TEXT:"):].strip()
            text_items = [t.strip() for t in body.split(";") if t.strip()] if body else []
            continue
        if line.startswith("SO FAR:"):
            tm = TYPE_RE.search(line)
            if tm and prior_type is None:
                prior_type = tm.group(1)
            continue
        m = EXAMPLE_RE.match(line)
        if m:
            tm = TYPE_RE.search(m.group(2))
            if tm:
                votes[tm.group(1)] += 1.0 / int(m.group(1) or 1)
    hint = next(
        (kw for t in text_items for kw in CHART_TYPES if t.lower() in (kw, f"{kw} chart")), None
    )
    if prior_type:
        facts.chart_type = prior_type
    elif hint:
        facts.chart_type = hint
    elif votes:
        facts.chart_type = sorted(votes.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
    if text_items:
        facts.title = text_items[0]
    if len(text_items) > 1:
        facts.y_label = text_items[1]
    return facts


class MockGenerator:
    """Deterministic template generator; sampling parameters are accepted and ignored."""

    generator_id = "mock-template-v1"
    supports_concurrency = True
    max_concurrency = 8
    merges_locally = True

    def __init__(self, smoothing: float = 0.5):
        self.smoothing = smoothing

    def render(self, prompt: str) -> str:
        first = prompt.lstrip().splitlines()[0] if prompt.strip() else ""
        if first.startswith(INTEGRATE_MARKER):
            thoughts = [m.group(2) for m in map(THOUGHT_RE.match, prompt.splitlines()) if m]
            return " ".join(dedup_sentences(thoughts))
        m = STAGE_RE.match(first)
        facts = facts_from_prompt(prompt)
        if m and m.group(1) in STAGE_VERBALIZERS:
            sentences = STAGE_VERBALIZERS[m.group(1)](facts)
        else:
            sentences = [caption_sentence(facts)]
        return " ".join(sentences) or caption_sentence(facts)

    def generate(self, prompt: str, params: GenerationParams = GenerationParams()):
        if not prompt or not prompt.strip():
            raise EmptyPrompt("prompt is empty")
        text = self.render(prompt)
        return text, self.score_sequence(tokenize(text), prompt)

    # The scoring model. Context = prompt tokens + generated prefix; the
    # vocabulary is fixed by the prompt alone so that scoring a continuation
    # after a prefix uses exactly the distributions the joint scoring used.

    def vocabulary(self, prompt: str) -> list[str]:
        return sorted(set(BASE_VOCAB) | set(tokenize(prompt)))

    def _state(self, prompt: str, prefix: Sequence[str]):
        vocab = set(self.vocabulary(prompt))
        counts = Counter(tokenize(prompt))
        total = sum(counts.values())
        for tok in prefix:
            counts[tok if tok in vocab else UNK] += 1
            total += 1
        return vocab, counts, total

    def distribution(self, prompt: str, prefix: Sequence[str] = ()) -> dict[str, float]:
        vocab, counts, total = self._state(prompt, prefix)
        denom = total + self.smoothing * len(vocab)
        return {w: (counts[w] + self.smoothing) / denom for w in sorted(vocab)}

    def score_sequence(
        self, tokens: Sequence[str], prompt: str, prefix: Sequence[str] = ()
    ) -> GenerationTrace:
        if not tokens:
            raise ValueError("cannot score an empty token sequence")
        vocab, counts, total = self._state(prompt, prefix)
        alpha_v = self.smoothing * len(vocab)
        steps = []
        for tok in tokens:
            key = tok if tok in vocab else UNK
            steps.append(math.log((counts[key] + self.smoothing) / (total + alpha_v)))
            counts[key] += 1
            total += 1
        return GenerationTrace(tuple(tokens), tuple(steps), sum(steps))


def score_sequence(tokens: Sequence[str], prompt: str, prefix: Sequence[str] = ()) -> GenerationTrace:
    return MockGenerator().score_sequence(tokens, prompt, prefix)


# -- HTTP client -------------------------------------------------------------

RETRY_STATUSES = frozenset({429}) | frozenset(range(500, 600))


class HttpGenerator:
    """Chat-completions client with bounded concurrency and retry on 429/5xx/timeouts."""

    merges_locally = False
    supports_concurrency = True

    def __init__(
        self,
        endpoint: str,
        model: str = "default",
        api_key: Optional[str] = None,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff: Sequence[float] = (0.5, 1.0, 2.0),
        max_concurrency: int = 4,
        client: Optional[httpx.Client] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = tuple(backoff)
        self.max_concurrency = max_concurrency
        self.generator_id = f"http:{model}"
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_concurrency)

    def request_body(self, prompt: str, params: GenerationParams) -> bytes:
        return json.dumps(
            {
                "model": self.model,
                "messages": [{"role": "user", "content": prompt}],
                "max_tokens": params.max_tokens,
                "temperature": params.temperature,
                "seed": params.seed,
            }
        ).encode("utf-8")

    def generate(self, prompt: str, params: GenerationParams = GenerationParams()):
        if not prompt or not prompt.strip():
            raise EmptyPrompt("prompt is empty")
        body = self.request_body(prompt, params)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        with self._slots:
            return self._post_with_retry(body, headers), None

    def _post_with_retry(self, body: bytes, headers: dict) -> str:
        failure: GenerationError = GenerationError("no attempt made")
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff[min(attempt - 1, len(self.backoff) - 1)])
            try:
                resp = self._client.post(self.endpoint, content=body, headers=headers, timeout=self.timeout)
            except httpx.TimeoutException as exc:
                failure = GenerationTimeout(f"request timed out after {self.timeout}s: {exc}")
                log.warning("attempt %d timed out", attempt + 1)
                continue
            except httpx.TransportError as exc:
                raise EndpointError(None, str(exc)) from exc
            if resp.status_code == 200:
                try:
                    content = resp.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise EndpointError(200, resp.text) from exc
                if not isinstance(content, str):
                    raise EndpointError(200, resp.text)
                return content
            failure = EndpointError(resp.status_code, resp.text)
            if resp.status_code not in RETRY_STATUSES:
                raise failure
            log.warning("attempt %d got status %d", attempt + 1, resp.status_code)
        raise failure
