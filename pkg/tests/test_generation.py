import json
import math
import threading
import time

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chartsum.chart import ChartSpec, ChartType, Series
from chartsum.cot import ThoughtOutput, compose_stage_prompt
from chartsum.embedding import EmptyPrompt
from chartsum.fusion import parse_chart
from chartsum.generation import (
    API_KEY_ENV,
    FACT_RE,
    ChartFacts,
    EndpointError,
    GenerationParams,
    GenerationTimeout,
    GenerationTrace,
    HttpGenerator,
    MockGenerator,
    dedup_sentences,
    fact_sentence,
    facts_from_prompt,
    score_sequence,
    split_sentences,
    verbalize,
)
from chartsum.retrieval import Stage, WeightedContext
from chartsum.text import tokenize

EMPTY_CTX = WeightedContext((), (), np.zeros(4))


def line_spec(values, name="Sales"):
    return ChartSpec(
        "l", ChartType.LINE, "Sales over time", "Year", "Sales (units)",
        (Series(name, tuple((2000 + i, v) for i, v in enumerate(values))),),
    )


def prompt_for(stage, spec, ctx=EMPTY_CTX, priors=()):
    return compose_stage_prompt(stage, parse_chart(spec), ctx, priors)


def ctx_with(*texts):
    return WeightedContext(tuple((t, 1.0 / i) for i, t in enumerate(texts, 1)), tuple(f"e{i}" for i in range(len(texts))), np.zeros(4))


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            GenerationParams(max_tokens=0)
        with pytest.raises(ValueError):
            GenerationParams(temperature=-1)

    def test_trace_invariants(self):
        with pytest.raises(ValueError):
            GenerationTrace(("a",), (), 0.0)
        with pytest.raises(ValueError):
            GenerationTrace(("a",), (-1.0,), -2.0)


class TestVerbalizer:
    def test_fact_sentence_round_trip(self):
        s = fact_sentence("North Sales", "2020", 12.5)
        m = FACT_RE.search(s)
        assert (m.group("label"), m.group("x"), float(m.group("value"))) == ("North Sales", "2020", 12.5)

    def test_full_summary_style(self):
        text = verbalize(ChartFacts("bar", "Exports by region", "Exports", [("A", "x", 1.0), ("A", "y", 3.0)]))
        assert text.startswith("This is a bar chart. The chart shows Exports by region.")
        assert "increasing trend, from 1 in x to 3 in y" in text

    def test_sentences(self):
        assert split_sentences("One. Two!  Three?") == ["One.", "Two!", "Three?"]
        assert dedup_sentences(["A. B.", "B. C."]) == ["A.", "B.", "C."]


class TestMockGenerator:
    def setup_method(self):
        self.gen = MockGenerator()

    def test_chart_type_stage_from_examples(self):
        spec = ChartSpec("b", ChartType.BAR, "T", "X", "Y", (Series("A", (("a", 1), ("b", 2))),))
        prompt = prompt_for(Stage.CHART_TYPE, spec, ctx_with("This is a bar chart.", "This is a line chart."))
        text, trace = self.gen.generate(prompt)
        assert text == "This is a bar chart."
        assert trace.tokens == tuple(tokenize(text))

    def test_chart_type_from_hint_beats_examples(self):
        spec = ChartSpec("b", ChartType.PIE, "pie chart", "category", "Y", (Series("value", (("a", 1), ("b", 2))),))
        prompt = prompt_for(Stage.CHART_TYPE, spec, ctx_with("This is a bar chart."))
        assert self.gen.generate(prompt)[0] == "This is a pie chart."

    def test_weighted_vote(self):
        spec = line_spec([1, 2])
        two = ctx_with("This is a scatter chart.", "This is a line chart.", "This is a line chart.")
        # 1 beats 1/2 + 1/3, but loses to 1/2 + 1/3 + 1/4.
        assert self.gen.generate(prompt_for(Stage.CHART_TYPE, spec, two))[0] == "This is a scatter chart."
        three = ctx_with(*["This is a scatter chart."] + ["This is a line chart."] * 3)
        assert self.gen.generate(prompt_for(Stage.CHART_TYPE, spec, three))[0] == "This is a line chart."

    def test_prior_thought_fixes_type(self):
        spec = line_spec([1, 2])
        prior = ThoughtOutput(Stage.CHART_TYPE, "", "This is a scatter chart.", "m", ())
        facts = facts_from_prompt(prompt_for(Stage.TREND, spec, ctx_with("This is a line chart."), [prior]))
        assert facts.chart_type == "scatter"

    def test_unknown_type(self):
        assert self.gen.generate(prompt_for(Stage.CHART_TYPE, line_spec([1, 2])))[0] == "This is a chart."

    def test_caption_and_axes(self):
        spec = line_spec([1, 2, 3])
        assert self.gen.generate(prompt_for(Stage.CAPTION, spec))[0] == "The chart shows Sales over time."
        axes = self.gen.generate(prompt_for(Stage.AXES, spec))[0]
        assert axes == "The horizontal axis runs from 2000 to 2002, and the vertical axis shows Sales (units)."

    @pytest.mark.parametrize("values, word", [([1, 2, 4, 8], "increasing"), ([9, 7, 4, 1], "decreasing")])
    def test_trend_word(self, values, word):
        text = self.gen.generate(prompt_for(Stage.TREND, line_spec(values)))[0]
        assert f"overall {word} trend" in text
        assert f"from {values[0]} in 2000 to {values[-1]} in 2003" in text

    def test_flat_trend(self):
        text = self.gen.generate(prompt_for(Stage.TREND, line_spec([5, 5, 5])))[0]
        assert "stays stable overall" in text

    def test_deterministic(self):
        prompt = prompt_for(Stage.TREND, line_spec([3, 1, 4, 1, 5]))
        a = self.gen.generate(prompt, GenerationParams(seed=1))
        b = self.gen.generate(prompt, GenerationParams(seed=1))
        assert a == b

    def test_empty_prompt(self):
        with pytest.raises(EmptyPrompt):
            self.gen.generate("  ")

    def test_integrate_prompt(self):
        prompt = "[INTEGRATE] merge\nTHOUGHT (ChartType): A. B.\nTHOUGHT (Trend): B. C."
        assert self.gen.generate(prompt)[0] == "A. B. C."


PROMPTS = st.sampled_from([
    "[STAGE Trend] Describe.\nSales | 2000 | 1\nSales | 2001 | 3\nLEGENDS:\nTEXT: Sales over time",
    "[STAGE ChartType] Identify.\nEXAMPLE (w=1): This is a bar chart.",
    "free text prompt with no structure at all",
])
TOKENS = st.lists(st.sampled_from(["this", "is", "a", "chart", ".", "sales", "zebra", "2001", "<unk>"]), min_size=1, max_size=30)


class TestScoring:
    @given(TOKENS, PROMPTS)
    def test_chain_rule_and_bounds(self, tokens, prompt):
        trace = score_sequence(tokens, prompt)
        assert abs(trace.total_logprob - sum(trace.stepwise_logprobs)) <= 1e-9
        assert trace.total_logprob <= 0.0 and all(lp < 0 for lp in trace.stepwise_logprobs)
        assert 0.0 < math.exp(trace.total_logprob) <= 1.0

    def test_single_token(self):
        trace = score_sequence(["chart"], "a prompt")
        assert trace.total_logprob == trace.stepwise_logprobs[0]

    @given(TOKENS, TOKENS, PROMPTS)
    def test_concatenation(self, a, b, prompt):
        whole = score_sequence(a + b, prompt).total_logprob
        split = score_sequence(a, prompt).total_logprob + score_sequence(b, prompt, prefix=a).total_logprob
        assert abs(whole - split) <= 1e-9

    @given(st.lists(st.sampled_from(["chart", "zebra", "the", "."]), max_size=20), PROMPTS)
    def test_distribution_normalized(self, prefix, prompt):
        dist = MockGenerator().distribution(prompt, prefix)
        assert abs(sum(dist.values()) - 1.0) <= 1e-9
        assert all(p > 0 for p in dist.values())

    def test_empty_sequence(self):
        with pytest.raises(ValueError):
            score_sequence([], "p")


def chat_response(content="Generated text."):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


class Recorder:
    """In-process endpoint: replays scripted responses and records requests."""

    def __init__(self, *responses):
        self.responses = list(responses)
        self.requests: list[httpx.Request] = []

    def __call__(self, request):
        self.requests.append(request)
        r = self.responses.pop(0) if len(self.responses) > 1 else self.responses[0]
        if isinstance(r, Exception):
            raise r
        return r


def client_for(handler, **kw):
    sleeps = []
    gen = HttpGenerator(
        "http://endpoint.test/v1/chat/completions",
        model="m",
        api_key="secret",
        client=httpx.Client(transport=httpx.MockTransport(handler)),
        sleep=sleeps.append,
        **kw,
    )
    return gen, sleeps


class TestHttpGenerator:
    def test_wire_format(self):
        rec = Recorder(chat_response("Hello."))
        gen, _ = client_for(rec)
        text, trace = gen.generate("Describe the chart.", GenerationParams(max_tokens=50, temperature=0.2, seed=7))
        assert (text, trace) == ("Hello.", None)
        req = rec.requests[0]
        assert req.method == "POST" and req.url.path == "/v1/chat/completions"
        assert json.loads(req.content) == {
            "model": "m",
            "messages": [{"role": "user", "content": "Describe the chart."}],
            "max_tokens": 50,
            "temperature": 0.2,
            "seed": 7,
        }
        assert req.headers["authorization"] == "Bearer secret"

    def test_api_key_from_env(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "from-env")
        gen = HttpGenerator("http://endpoint.test/x", client=httpx.Client(transport=httpx.MockTransport(Recorder(chat_response()))))
        assert gen.api_key == "from-env"

    def test_retry_then_success(self):
        rec = Recorder(httpx.Response(503, text="busy"), httpx.Response(429), chat_response("ok"))
        gen, sleeps = client_for(rec)
        assert gen.generate("p")[0] == "ok"
        assert sleeps == [0.5, 1.0]
        assert len({r.content for r in rec.requests}) == 1 and len(rec.requests) == 3

    def test_gives_up_after_three(self):
        rec = Recorder(httpx.Response(500, text="x" * 500))
        gen, sleeps = client_for(rec)
        with pytest.raises(EndpointError) as info:
            gen.generate("p")
        assert info.value.status == 500 and len(info.value.body) == 200
        assert len(rec.requests) == 3 and sleeps == [0.5, 1.0]

    @pytest.mark.parametrize("status", [400, 401, 404, 422])
    def test_no_retry_on_client_errors(self, status):
        rec = Recorder(httpx.Response(status, text="bad"))
        gen, sleeps = client_for(rec)
        with pytest.raises(EndpointError):
            gen.generate("p")
        assert len(rec.requests) == 1 and sleeps == []

    def test_timeout_retried(self):
        rec = Recorder(httpx.ReadTimeout("slow"), chat_response("late"))
        gen, sleeps = client_for(rec)
        assert gen.generate("p")[0] == "late"
        assert sleeps == [0.5]

    def test_timeout_exhausted(self):
        rec = Recorder(httpx.ConnectTimeout("slow"))
        gen, _ = client_for(rec)
        with pytest.raises(GenerationTimeout):
            gen.generate("p")
        assert len(rec.requests) == 3

    def test_malformed_response(self):
        gen, _ = client_for(Recorder(httpx.Response(200, json={"nope": 1})))
        with pytest.raises(EndpointError):
            gen.generate("p")

    def test_empty_prompt(self):
        gen, _ = client_for(Recorder(chat_response()))
        with pytest.raises(EmptyPrompt):
            gen.generate("")

    def test_concurrency_bound(self):
        lock = threading.Lock()
        state = {"now": 0, "peak": 0}

        def handler(request):
            with lock:
                state["now"] += 1
                state["peak"] = max(state["peak"], state["now"])
            time.sleep(0.02)
            with lock:
                state["now"] -= 1
            return chat_response()

        gen, _ = client_for(handler, max_concurrency=2)
        threads = [threading.Thread(target=gen.generate, args=("p",)) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert state["peak"] == 2

    def test_bad_config(self):
        with pytest.raises(ValueError):
            HttpGenerator("http://x", max_concurrency=0)
