"""Staged chain of thought: chart type -> caption -> axes -> trend, then consolidation."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .chart import ChartType
from .embedding import DEFAULT_DIM, ZeroVector, embed_chart
from .fusion import ParsedChart, to_prompt_block
from .generation import (
    INTEGRATE_MARKER,
    GenerationError,
    GenerationParams,
    Generator,
    dedup_sentences,
)
from .retrieval import DEFAULT_K, STAGES, ContextLibrary, Stage, WeightedContext, retrieve_top_k, weighted_context
from .rng import Rng

DEFAULT_INSTRUCTIONS = {
    Stage.CHART_TYPE: "Identify the type of the chart.",
    Stage.CAPTION: "Write a one-sentence overview of what the chart shows.",
    Stage.AXES: "Explain what the horizontal and vertical axes mean.",
    Stage.TREND: "Describe the trend of the data, citing the values.",
}
INTEGRATE_INSTRUCTION = (
    "Combine the thoughts below into one coherent chart summary, "
    "keeping their order and every number they mention."
)


class GenerationFailed(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        super().__init__(f"generation failed at stage {stage}: {cause}")


class EmptyStage(ValueError):
    pass


@dataclass(frozen=True)
class StageConfig:
    stage: Stage
    instruction: str = ""
    k: int = DEFAULT_K
    params: GenerationParams = GenerationParams()
    skippable: bool = False

    def __post_init__(self):
        object.__setattr__(self, "stage", Stage(self.stage))
        if not self.instruction:
            object.__setattr__(self, "instruction", DEFAULT_INSTRUCTIONS[self.stage])
        if self.k < 0:
            raise ValueError("k must be >= 0")


@dataclass(frozen=True)
class StagePlan:
    stages: tuple[StageConfig, ...]

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        names = [s.stage for s in self.stages]
        if len(set(names)) != len(names):
            raise ValueError("stages in a plan must be unique")
        if not names:
            raise ValueError("plan has no stages")

    @classmethod
    def default(cls, k: int = DEFAULT_K, stages: Sequence[Stage] = STAGES, skippable: bool = False) -> "StagePlan":
        return cls(tuple(StageConfig(Stage(s), k=k, skippable=skippable) for s in stages))


@dataclass(frozen=True)
class ThoughtOutput:
    stage: Stage
    prompt: str
    text: str
    generator_id: str
    retrieved_ids: tuple[str, ...]


@dataclass(frozen=True)
class SummaryResult:
    summary: str
    thoughts: tuple[ThoughtOutput, ...]
    trace_seed: int

    def to_dict(self) -> dict:
        return {
            "summary": self.summary,
            "seed": self.trace_seed,
            "stages": [
                {
                    "stage": t.stage.value,
                    "prompt": t.prompt,
                    "text": t.text,
                    "generator_id": t.generator_id,
                    "retrieved_ids": list(t.retrieved_ids),
                }
                for t in self.thoughts
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)


def _weight_label(i: int) -> str:
    return "1" if i == 1 else f"1/{i}"


def _one_line(text: str) -> str:
    return " ".join(text.split())


def compose_stage_prompt(
    stage: Stage,
    parsed: ParsedChart,
    ctx: WeightedContext,
    prior_thoughts: Sequence[ThoughtOutput] = (),
    instruction: Optional[str] = None,
) -> str:
    """Instruction, ranked examples, prior thoughts, then the chart block."""
    stage = Stage(stage)
    lines = [f"[STAGE {stage.value}] {instruction or DEFAULT_INSTRUCTIONS[stage]}"]
    for i, (text, _) in enumerate(ctx.texts, start=1):
        lines.append(f"EXAMPLE (w={_weight_label(i)}): {_one_line(text)}")
    for t in prior_thoughts:
        lines.append(f"SO FAR: {_one_line(t.text)}")
    block = to_prompt_block(parsed)
    if block:
        lines.append(block)
    return "\n".join(lines)


def integrate(thoughts: Sequence[ThoughtOutput], gen: Generator, params: GenerationParams = GenerationParams()) -> str:
    if getattr(gen, "merges_locally", False):
        return " ".join(dedup_sentences(t.text for t in thoughts))
    lines = [f"{INTEGRATE_MARKER} {INTEGRATE_INSTRUCTION}"]
    lines += [f"THOUGHT ({t.stage.value}): {_one_line(t.text)}" for t in thoughts]
    try:
        text, _ = gen.generate("\n".join(lines), params)
    except GenerationError as exc:
        raise GenerationFailed("integrate", exc) from exc
    if not text.strip():
        raise GenerationFailed("integrate", ValueError("empty output"))
    return text.strip()


def stage_seed(seed: int, stage: Stage) -> int:
    return Rng(seed).split(f"stage:{Stage(stage).value}").next_u64()


def run_pipeline(
    parsed: ParsedChart,
    lib: ContextLibrary,
    plan: StagePlan,
    gen: Generator,
    seed: int = 0,
    chart_type: Optional[ChartType] = None,
) -> SummaryResult:
    """Run every planned stage in order and consolidate the thoughts.

    ``chart_type`` is the visual channel of the chart (what an image encoder
    would see); it feeds the chart embedding only, never the prompt text.
    """
    for cfg in plan.stages:
        if not lib.stage(cfg.stage) and not cfg.skippable:
            raise EmptyStage(f"library has no examples for stage {cfg.stage.value}")

    query = embed_chart(parsed, chart_type, dim=_library_dim(lib))
    if not query.any() and any(cfg.k > 0 and lib.stage(cfg.stage) for cfg in plan.stages):
        raise ZeroVector("chart has nothing to embed")

    thoughts: list[ThoughtOutput] = []
    for cfg in plan.stages:
        ranked = []
        if cfg.k > 0 and lib.stage(cfg.stage):
            ranked = retrieve_top_k(lib, cfg.stage, query, cfg.k)
        ctx = weighted_context(ranked, dim=query.shape[0])
        prompt = compose_stage_prompt(cfg.stage, parsed, ctx, thoughts, cfg.instruction)
        params = replace(cfg.params, seed=stage_seed(seed, cfg.stage))
        try:
            text, _ = gen.generate(prompt, params)
        except GenerationError as exc:
            raise GenerationFailed(cfg.stage.value, exc) from exc
        if not text or not text.strip():
            raise GenerationFailed(cfg.stage.value, ValueError("empty output"))
        thoughts.append(ThoughtOutput(cfg.stage, prompt, text.strip(), gen.generator_id, ctx.ids))

    summary = integrate(thoughts, gen, replace(plan.stages[-1].params, seed=seed & ((1 << 64) - 1)))
    return SummaryResult(summary, tuple(thoughts), seed)


def _library_dim(lib: ContextLibrary) -> int:
    return lib.examples[0].feature.shape[0] if lib.examples else DEFAULT_DIM


def run_many(
    charts: Sequence[tuple[ParsedChart, Optional[ChartType]]],
    lib: ContextLibrary,
    plan: StagePlan,
    gen: Generator,
    seeds: Sequence[int],
) -> list[SummaryResult]:
    """Summarize several charts; results follow input order whatever the completion order."""
    workers = gen.max_concurrency if getattr(gen, "supports_concurrency", False) else 1
    workers = max(1, min(workers, len(charts) or 1))

    def one(i: int) -> SummaryResult:
        parsed, ctype = charts[i]
        return run_pipeline(parsed, lib, plan, gen, seeds[i], ctype)

    if workers == 1:
        return [one(i) for i in range(len(charts))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(len(charts))))
