import numpy as np
import pytest

from chartsum.chart import ChartType
from chartsum.cot import (
    EmptyStage,
    GenerationFailed,
    StageConfig,
    StagePlan,
    ThoughtOutput,
    compose_stage_prompt,
    integrate,
    run_many,
    run_pipeline,
)
from chartsum.dataset import generate_synthetic_corpus, library_entries
from chartsum.fusion import ParsedChart, parse_chart, to_prompt_block
from chartsum.generation import EndpointError, GenerationParams, MockGenerator
from chartsum.retrieval import STAGES, Stage, WeightedContext, build_library, retrieve_top_k
from chartsum.embedding import embed_chart


@pytest.fixture(scope="module")
def corpus():
    specs, manifest = generate_synthetic_corpus(48, 11)
    lib = build_library(library_entries(specs[:32]))
    return specs[32:], lib


class StubGenerator:
    """Counts calls; returns a fixed sentence per call; optionally fails."""

    generator_id = "stub"
    supports_concurrency = False
    max_concurrency = 1
    merges_locally = False

    def __init__(self, fail_on=None):
        self.prompts = []
        self.fail_on = fail_on

    def generate(self, prompt, params=GenerationParams()):
        self.prompts.append(prompt)
        if self.fail_on and prompt.startswith(self.fail_on):
            raise EndpointError(500, "boom")
        return f"Thought {len(self.prompts)}.", None


def thought(stage, text):
    return ThoughtOutput(Stage(stage), "p", text, "g", ())


class TestPlan:
    def test_default_order(self):
        assert [c.stage for c in StagePlan.default().stages] == list(STAGES)

    def test_unique(self):
        with pytest.raises(ValueError):
            StagePlan((StageConfig(Stage.TREND), StageConfig(Stage.TREND)))
        with pytest.raises(ValueError):
            StagePlan(())

    def test_config(self):
        assert StageConfig(Stage.AXES).instruction
        with pytest.raises(ValueError):
            StageConfig(Stage.AXES, k=-1)


class TestComposePrompt:
    def test_no_examples(self):
        parsed = parse_chart(generate_synthetic_corpus(1, 0)[0][0])
        prompt = compose_stage_prompt(Stage.CAPTION, parsed, WeightedContext((), (), np.zeros(3)))
        head, _, rest = prompt.partition("\n")
        assert head.startswith("[STAGE Caption] ")
        assert rest == to_prompt_block(parsed)

    def test_example_markers_in_order(self, corpus):
        specs, lib = corpus
        parsed = parse_chart(specs[0])
        ranked = retrieve_top_k(lib, Stage.TREND, embed_chart(parsed, specs[0].chart_type), 3)
        from chartsum.retrieval import weighted_context

        prompt = compose_stage_prompt(Stage.TREND, parsed, weighted_context(ranked))
        positions = [prompt.index(m) for m in ("EXAMPLE (w=1):", "EXAMPLE (w=1/2):", "EXAMPLE (w=1/3):")]
        assert positions == sorted(positions)
        text_pos = [prompt.index(" ".join(r.example.example_text.split())) for r in ranked]
        assert text_pos == sorted(text_pos)

    def test_priors_before_chart_block(self):
        parsed = parse_chart(generate_synthetic_corpus(1, 0)[0][0])
        priors = [thought(s, f"Prior {i}.") for i, s in enumerate(STAGES[:3])]
        prompt = compose_stage_prompt(Stage.TREND, parsed, WeightedContext((), (), np.zeros(3)), priors)
        block_at = prompt.index(to_prompt_block(parsed))
        at = [prompt.index(f"SO FAR: Prior {i}.") for i in range(3)]
        assert at == sorted(at) and at[-1] < block_at

    def test_byte_stable(self):
        parsed = parse_chart(generate_synthetic_corpus(1, 0)[0][0])
        ctx = WeightedContext((("Example\ntext.", 1.0),), ("a",), np.zeros(3))
        a = compose_stage_prompt(Stage.AXES, parsed, ctx)
        assert a == compose_stage_prompt(Stage.AXES, parsed, ctx)
        assert "EXAMPLE (w=1): Example text." in a


class TestIntegrate:
    def test_mock_concatenates(self):
        ts = [thought(s, f"Sentence {i}.") for i, s in enumerate(STAGES)]
        assert integrate(ts, MockGenerator()) == "Sentence 0. Sentence 1. Sentence 2. Sentence 3."

    def test_mock_dedups(self):
        ts = [thought(Stage.CHART_TYPE, "Same. One."), thought(Stage.TREND, "Same.  Two.")]
        assert integrate(ts, MockGenerator()) == "Same. One. Two."

    def test_external_single_call(self):
        gen = StubGenerator()
        ts = [thought(s, f"T{i}.") for i, s in enumerate(STAGES)]
        assert integrate(ts, gen) == "Thought 1."
        assert len(gen.prompts) == 1
        assert all(f"THOUGHT ({s.value}): T{i}." in gen.prompts[0] for i, s in enumerate(STAGES))

    def test_external_failure(self):
        gen = StubGenerator(fail_on="[INTEGRATE]")
        with pytest.raises(GenerationFailed) as info:
            integrate([thought(Stage.TREND, "x.")], gen)
        assert info.value.stage == "integrate"


class TestRunPipeline:
    def test_deterministic(self, corpus):
        specs, lib = corpus
        plan = StagePlan.default()
        for spec in specs[:4]:
            a = run_pipeline(parse_chart(spec), lib, plan, MockGenerator(), 5, spec.chart_type)
            b = run_pipeline(parse_chart(spec), lib, plan, MockGenerator(), 5, spec.chart_type)
            assert a.to_json() == b.to_json()

    def test_trace_shape(self, corpus):
        specs, lib = corpus
        result = run_pipeline(parse_chart(specs[0]), lib, StagePlan.default(k=2), MockGenerator(), 0, specs[0].chart_type)
        assert [t.stage for t in result.thoughts] == list(STAGES)
        for t in result.thoughts:
            assert t.text and len(t.retrieved_ids) <= 2
            assert set(t.retrieved_ids) <= {e.id for e in lib.stage(t.stage)}
        doc = result.to_dict()
        assert doc["seed"] == 0 and [s["stage"] for s in doc["stages"]] == [s.value for s in STAGES]

    def test_bar_summary_opens_with_type(self, corpus):
        specs, lib = corpus
        bar = next(s for s in specs if s.chart_type is ChartType.BAR)
        result = run_pipeline(parse_chart(bar), lib, StagePlan.default(), MockGenerator(), 0, bar.chart_type)
        assert result.summary.startswith("This is a bar chart.")

    def test_missing_stage(self, corpus):
        specs, lib = corpus
        partial = build_library([e for e in library_entries(specs[:4]) if e.stage is not Stage.TREND])
        with pytest.raises(EmptyStage):
            run_pipeline(parse_chart(specs[0]), partial, StagePlan.default(), MockGenerator())

    def test_skippable_stage_runs_without_examples(self, corpus):
        specs, _ = corpus
        partial = build_library([e for e in library_entries(specs[:4]) if e.stage is not Stage.TREND])
        result = run_pipeline(parse_chart(specs[0]), partial, StagePlan.default(skippable=True), MockGenerator())
        assert result.thoughts[-1].retrieved_ids == ()

    def test_failure_names_stage(self, corpus):
        specs, lib = corpus
        with pytest.raises(GenerationFailed) as info:
            run_pipeline(parse_chart(specs[0]), lib, StagePlan.default(), StubGenerator(fail_on="[STAGE Axes]"))
        assert info.value.stage == "Axes"

    def test_external_generator_call_count(self, corpus):
        specs, lib = corpus
        gen = StubGenerator()
        run_pipeline(parse_chart(specs[0]), lib, StagePlan.default(), gen)
        assert len(gen.prompts) == len(STAGES) + 1
        assert gen.prompts[1].count("SO FAR:") == 1 and gen.prompts[3].count("SO FAR:") == 3

    def test_custom_order(self, corpus):
        specs, lib = corpus
        plan = StagePlan((StageConfig(Stage.TREND), StageConfig(Stage.CHART_TYPE)))
        result = run_pipeline(parse_chart(specs[0]), lib, plan, MockGenerator())
        assert [t.stage for t in result.thoughts] == [Stage.TREND, Stage.CHART_TYPE]

    def test_empty_chart(self, corpus):
        _, lib = corpus
        from chartsum.embedding import ZeroVector

        with pytest.raises(ZeroVector):
            run_pipeline(ParsedChart(), lib, StagePlan.default(), MockGenerator())

    def test_run_many_keeps_order(self, corpus):
        specs, lib = corpus
        charts = [(parse_chart(s), s.chart_type) for s in specs[:8]]
        gen = MockGenerator()
        many = run_many(charts, lib, StagePlan.default(), gen, [3] * 8)
        one = [run_pipeline(p, lib, StagePlan.default(), gen, 3, t) for p, t in charts]
        assert [r.to_json() for r in many] == [r.to_json() for r in one]
