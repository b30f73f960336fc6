"""Fraction of fused values equal to ground truth as table corruption and OCR drops grow."""

import argparse

from chartsum.chart import NoiseConfig, ZERO_NOISE, render_linearized_table, render_token_stream, spec_pairs
from chartsum.dataset import generate_synthetic_corpus
from chartsum.fusion import fuse_extractions


def exact_rate(specs, table_noise: NoiseConfig, ocr_noise: NoiseConfig) -> float:
    total = exact = 0
    for i, spec in enumerate(specs):
        fused = fuse_extractions(render_token_stream(spec, ocr_noise, i), render_linearized_table(spec, table_noise, i))
        got = {(p.label, p.x): p.value for p in fused.pairs}
        for label, x, v in spec_pairs(spec):
            total += 1
            exact += got.get((label, x)) == v
    return exact / total


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    specs, _ = generate_synthetic_corpus(args.count, args.seed)
    print(f"{'scale':>6}{'drop':>6}{'exact':>8}")
    for scale in (0.0, 0.05, 0.1, 0.2, 0.5):
        for drop in (0.0, 0.1, 0.3):
            table = NoiseConfig(value_corruption_prob=1.0 if scale else 0.0, value_corruption_scale=scale)
            ocr = NoiseConfig(drop_token_prob=drop) if drop else ZERO_NOISE
            print(f"{scale:>6.2f}{drop:>6.1f}{exact_rate(specs, table, ocr):>8.4f}")


if __name__ == "__main__":
    main()
