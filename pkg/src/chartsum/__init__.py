"""Chart summarization pipeline: parsing, staged retrieval, chain-of-thought generation, evaluation."""

from .chart import (
    ChartSpec,
    ChartType,
    InvalidSpec,
    LinearTable,
    MalformedSpec,
    NoiseConfig,
    Series,
    Token,
    TokenKind,
    TokenStream,
    ZERO_NOISE,
    load_chart_spec,
    parse_chart_spec,
    render_linearized_table,
    render_token_stream,
    serialize_chart_spec,
)
from .cot import (
    EmptyStage,
    GenerationFailed,
    StageConfig,
    StagePlan,
    SummaryResult,
    ThoughtOutput,
    compose_stage_prompt,
    integrate,
    run_many,
    run_pipeline,
)
from .dataset import (
    ManifestEntry,
    NoFacts,
    QAPair,
    generate_qa_pairs,
    generate_synthetic_corpus,
    split_dataset,
    validate_manifest,
)
from .embedding import EmptyPrompt, ZeroVector, embed_chart, embed_text, normalize
from .fusion import Pair, ParsedChart, fuse_extractions, parse_chart, to_prompt_block
from .generation import (
    EndpointError,
    GenerationParams,
    GenerationTimeout,
    GenerationTrace,
    Generator,
    HttpGenerator,
    MockGenerator,
    score_sequence,
)
from .metrics import (
    MetricColumn,
    MetricReport,
    NGramLM,
    Orientation,
    bleu,
    cider,
    content_selection,
    perplexity,
    s_norm,
    s_norm_aggregate,
    train_lm,
)
from .retrieval import (
    ContextExample,
    ContextLibrary,
    DuplicateId,
    RankedExample,
    Stage,
    WeightedContext,
    build_library,
    cosine_similarity,
    load_library,
    rank_weights,
    retrieve_top_k,
    save_library,
    weighted_context,
)
from .rng import Rng

__version__ = "0.1.0"
