"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 input or validation error,
3 generation or endpoint error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .chart import InvalidSpec, MalformedSpec, NoiseConfig, load_chart_spec, serialize_chart_spec
from .cot import EmptyStage, GenerationFailed, StageConfig, StagePlan, run_many, run_pipeline
from .dataset import (
    InvalidRatios,
    ManifestFormatError,
    NoFacts,
    generate_qa_pairs,
    generate_synthetic_corpus,
    library_entries,
    read_manifest,
    split_dataset,
    validate_manifest,
    write_manifest,
)
from .embedding import DEFAULT_DIM, EmptyPrompt, ZeroVector, embed_chart
from .fusion import parse_chart
from .generation import API_KEY_ENV, GenerationError, GenerationParams, HttpGenerator, MockGenerator
from .metrics import (
    DegenerateColumn,
    EmptyCorpus,
    LengthMismatch,
    evaluate,
    load_eval_manifest,
    snorm_table,
    train_lm,
)
from .retrieval import (
    DEFAULT_K,
    STAGES,
    DuplicateId,
    LibraryFormatError,
    Stage,
    build_library,
    load_library,
    retrieve_top_k,
    save_library,
)

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_GENERATION = 0, 1, 2, 3
DEFAULT_SEED = 0

INPUT_ERRORS = (
    OSError,
    json.JSONDecodeError,
    MalformedSpec,
    InvalidSpec,
    ManifestFormatError,
    LibraryFormatError,
    DuplicateId,
    EmptyStage,
    ZeroVector,
    EmptyPrompt,
    EmptyCorpus,
    LengthMismatch,
    DegenerateColumn,
    InvalidRatios,
    NoFacts,
    KeyError,
    ValueError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed for all randomness (default 0)")
    p.add_argument("--json", action="store_true", help="print machine-readable JSON on stdout")
    p.add_argument("-o", "--output", help="write the result to this path")
    return p


def _generation_opts() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--generator", choices=("mock", "http"), default="mock")
    p.add_argument("--endpoint", help="chat-completions URL (required with --generator http)")
    p.add_argument("--model", default="default")
    p.add_argument("--gen-timeout-secs", type=float, default=60.0)
    p.add_argument("--concurrency", type=int, default=None, help="max in-flight generations")
    return p


def build_parser() -> argparse.ArgumentParser:
    common, genopts = _common(), _generation_opts()
    parser = _Parser(prog="chartsum", description="Chart summarization pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", parents=[common], help="fuse simulated OCR and table views of a chart spec")
    p.add_argument("spec")
    p.add_argument("--corrupt-prob", type=float, default=0.0)
    p.add_argument("--corrupt-scale", type=float, default=0.0)
    p.add_argument("--drop-prob", type=float, default=0.0)

    p = sub.add_parser("build-library", parents=[common], help="build a staged example library from a manifest")
    p.add_argument("manifest", help="corpus manifest whose charts become library examples")
    p.add_argument("--dim", type=int, default=DEFAULT_DIM)
    p.add_argument("--per-stage", type=int, default=None)
    p.add_argument("--stages", nargs="+", choices=[s.value for s in STAGES], default=None)

    p = sub.add_parser("retrieve", parents=[common], help="rank library examples for a chart")
    p.add_argument("spec")
    p.add_argument("--library", required=True)
    p.add_argument("--stage", required=True, choices=[s.value for s in STAGES])
    p.add_argument("--top-k", type=int, default=DEFAULT_K)

    p = sub.add_parser("summarize", parents=[common, genopts], help="run the staged pipeline")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("spec", nargs="?")
    src.add_argument("--manifest")
    p.add_argument("--library", required=True)
    p.add_argument("--top-k", type=int, default=DEFAULT_K)
    p.add_argument("--stages", nargs="+", choices=[s.value for s in STAGES], default=None)
    p.add_argument("--skippable", action="store_true", help="allow stages with no library examples")
    p.add_argument("--max-tokens", type=int, default=256)

    p = sub.add_parser("evaluate", parents=[common], help="score hypotheses against references")
    p.add_argument("manifest", nargs="?", help="evaluation manifest (JSON lines)")
    p.add_argument("--system", action="append", default=[], metavar="NAME=PATH",
                   help="add a named system; with two or more, an S_norm table is included")

    p = sub.add_parser("dataset", help="corpus tooling")
    dsub = p.add_subparsers(dest="dataset_command", required=True, parser_class=_Parser)
    d = dsub.add_parser("gen", parents=[common], help="write a synthetic corpus")
    d.add_argument("--count", type=int, required=True)
    d.add_argument("--out-dir", required=True)
    d = dsub.add_parser("split", parents=[common], help="assign train/val/test splits")
    d.add_argument("manifest")
    d.add_argument("--ratios", type=float, nargs=3, default=(0.8, 0.1, 0.1))
    d = dsub.add_parser("validate", parents=[common], help="check a manifest")
    d.add_argument("manifest")
    d.add_argument("--base-dir", default=None, help="chart paths are relative to this (default: manifest dir)")
    d = dsub.add_parser("qa", parents=[common, genopts], help="attach QA pairs generated from summaries")
    d.add_argument("manifest")
    d.add_argument("-n", type=int, default=3)
    return parser


# -- output ------------------------------------------------------------------


def _emit(args, payload, human: str, jsonl: Optional[list] = None) -> None:
    """Write ``payload`` to -o (JSON lines if ``jsonl`` is given), JSON to stdout with --json, else ``human``."""
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            if jsonl is not None:
                f.writelines(json.dumps(doc, ensure_ascii=False) + "\n" for doc in jsonl)
            else:
                f.write(json.dumps(payload, ensure_ascii=False, indent=2) + "\n")
    if args.json:
        print(json.dumps(payload, ensure_ascii=False, indent=2))
    elif human:
        print(human)


def _make_generator(args):
    if args.concurrency is not None and args.concurrency < 1:
        raise UsageError("--concurrency must be >= 1")
    if args.generator == "http":
        if not args.endpoint:
            raise UsageError("--generator http requires --endpoint")
        return HttpGenerator(
            args.endpoint,
            model=args.model,
            api_key=os.environ.get(API_KEY_ENV),
            timeout=args.gen_timeout_secs,
            max_concurrency=args.concurrency or 4,
        )
    gen = MockGenerator()
    if args.concurrency is not None:
        gen.max_concurrency = args.concurrency
    return gen


# -- commands ----------------------------------------------------------------


def cmd_parse(args) -> int:
    spec = load_chart_spec(args.spec)
    noise = NoiseConfig(args.corrupt_prob, args.corrupt_scale, args.drop_prob)
    parsed = parse_chart(spec, noise, args.seed)
    doc = parsed.to_dict()
    human = "\n".join(f"{p.label} | {p.x} | {p.value}" for p in parsed.pairs)
    _emit(args, doc, human)
    return EXIT_OK


def cmd_build_library(args) -> int:
    entries = read_manifest(args.manifest)
    base = Path(args.manifest).parent
    specs = [load_chart_spec(base / e.chart_path) for e in entries]
    stages = [Stage(s) for s in args.stages] if args.stages else STAGES
    lib = build_library(library_entries(specs, stages), dim=args.dim, per_stage=args.per_stage)
    if not args.output:
        raise UsageError("build-library requires -o/--output")
    save_library(lib, args.output)
    counts = {s.value: len(lib.stage(s)) for s in STAGES}
    if args.json:
        print(json.dumps({"path": args.output, "counts": counts}, indent=2))
    else:
        print(f"wrote {len(lib.examples)} examples to {args.output}: {counts}")
    return EXIT_OK


def cmd_retrieve(args) -> int:
    if args.top_k < 0:
        raise UsageError("--top-k must be >= 0")
    lib = load_library(args.library)
    spec = load_chart_spec(args.spec)
    dim = lib.examples[0].feature.shape[0] if lib.examples else DEFAULT_DIM
    query = embed_chart(parse_chart(spec), spec.chart_type, dim=dim)
    ranked = retrieve_top_k(lib, Stage(args.stage), query, args.top_k)
    doc = [
        {"rank": r.rank, "id": r.example.id, "similarity": r.similarity, "weight": r.weight,
         "example_text": r.example.example_text}
        for r in ranked
    ]
    human = "\n".join(f"{d['rank']}\t{d['similarity']:.6f}\t{d['id']}" for d in doc)
    _emit(args, doc, human)
    return EXIT_OK


def _plan(args) -> StagePlan:
    if args.top_k < 0:
        raise UsageError("--top-k must be >= 0")
    if args.max_tokens < 1:
        raise UsageError("--max-tokens must be >= 1")
    stages = [Stage(s) for s in args.stages] if args.stages else list(STAGES)
    params = GenerationParams(max_tokens=args.max_tokens)
    return StagePlan(tuple(StageConfig(s, k=args.top_k, params=params, skippable=args.skippable) for s in stages))


def cmd_summarize(args) -> int:
    plan = _plan(args)
    gen = _make_generator(args)
    lib = load_library(args.library)
    if args.manifest:
        entries = read_manifest(args.manifest)
        base = Path(args.manifest).parent
        specs = [load_chart_spec(base / e.chart_path) for e in entries]
        charts = [(parse_chart(s), s.chart_type) for s in specs]
        results = run_many(charts, lib, plan, gen, [args.seed] * len(charts))
        docs = [dict(chart_path=e.chart_path, **r.to_dict()) for e, r in zip(entries, results)]
        human = "\n".join(f"{e.chart_path}\t{r.summary}" for e, r in zip(entries, results))
        _emit(args, docs, human, jsonl=docs)
        return EXIT_OK
    spec = load_chart_spec(args.spec)
    result = run_pipeline(parse_chart(spec), lib, plan, gen, args.seed, spec.chart_type)
    _emit(args, result.to_dict(), result.summary)
    return EXIT_OK


def _parse_systems(pairs: Sequence[str]) -> dict[str, str]:
    systems = {}
    for item in pairs:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--system expects NAME=PATH, got {item!r}")
        if name in systems:
            raise UsageError(f"system {name!r} given twice")
        systems[name] = path
    return systems


def cmd_evaluate(args) -> int:
    systems = _parse_systems(args.system)
    if args.manifest:
        if "default" in systems:
            raise UsageError("system name 'default' is taken by the positional manifest")
        systems = {"default": args.manifest, **systems}
    if not systems:
        raise UsageError("give an evaluation manifest or at least one --system")
    items = {name: load_eval_manifest(path) for name, path in systems.items()}
    # One reference LM shared by every system keeps perplexities comparable.
    lm = train_lm([r for its in items.values() for it in its for r in it.references])
    reports = {name: evaluate(its, lm=lm) for name, its in items.items()}
    table = snorm_table(reports) if len(reports) >= 2 else None
    doc = {"systems": {n: r.to_dict() for n, r in reports.items()}}
    if table is not None:
        doc["s_norm"] = table
    lines = [f"{'system':<16}{'BLEU':>8}{'CIDEr':>8}{'CS%':>8}{'PPL':>9}{'S_norm':>8}"]
    for n, r in reports.items():
        sn = f"{r.s_norm:.3f}" if r.s_norm is not None else "-"
        lines.append(f"{n:<16}{r.bleu:>8.2f}{r.cider:>8.2f}{r.cs_percent:>8.2f}{r.ppl:>9.2f}{sn:>8}")
    _emit(args, doc, "\n".join(lines))
    return EXIT_OK


def cmd_dataset(args) -> int:
    sub = args.dataset_command
    if sub == "gen":
        if args.count < 1:
            raise UsageError("--count must be >= 1")
        specs, manifest = generate_synthetic_corpus(args.count, args.seed)
        out = Path(args.out_dir)
        (out / "charts").mkdir(parents=True, exist_ok=True)
        for spec, entry in zip(specs, manifest):
            (out / entry.chart_path).write_bytes(serialize_chart_spec(spec))
        write_manifest(manifest, out / "manifest.jsonl")
        doc = {"manifest": str(out / "manifest.jsonl"), "count": len(specs)}
        if args.json:
            print(json.dumps(doc, indent=2))
        else:
            print(f"wrote {len(specs)} charts and {doc['manifest']}")
        return EXIT_OK
    entries = read_manifest(args.manifest)
    if sub == "split":
        out = split_dataset(entries, tuple(args.ratios), args.seed)
        docs = [e.to_dict() for e in out]
        sizes = {s: sum(e.split == s for e in out) for s in ("train", "val", "test")}
        _emit(args, docs, f"split sizes: {sizes}", jsonl=docs)
        return EXIT_OK
    if sub == "validate":
        base = args.base_dir if args.base_dir is not None else Path(args.manifest).parent
        report = validate_manifest(entries, base)
        human = "\n".join(
            [f"manifest {'passes' if report.ok else 'fails'}: {len(report.failures())} failing entries"]
            + [f"  [{c.index}] {c.chart_path}: {'; '.join(c.reasons)}" for c in report.failures()]
        )
        _emit(args, report.to_dict(), human)
        return EXIT_OK if report.ok else EXIT_INPUT
    if sub == "qa":
        if args.n < 1:
            raise UsageError("-n must be >= 1")
        gen = _make_generator(args)
        out = []
        for e in entries:
            pairs = generate_qa_pairs(e.summary, gen, args.n)
            out.append(type(e)(e.chart_path, e.summary, e.split, tuple(pairs)))
        docs = [e.to_dict() for e in out]
        _emit(args, docs, f"attached QA pairs to {len(out)} entries", jsonl=docs)
        return EXIT_OK
    raise UsageError(f"unknown dataset command {sub!r}")


COMMANDS = {
    "parse": cmd_parse,
    "build-library": cmd_build_library,
    "retrieve": cmd_retrieve,
    "summarize": cmd_summarize,
    "evaluate": cmd_evaluate,
    "dataset": cmd_dataset,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"chartsum: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GenerationFailed, GenerationError) as exc:
        print(f"chartsum: generation error: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except INPUT_ERRORS as exc:
        print(f"chartsum: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
