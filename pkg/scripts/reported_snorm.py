"""Recompute S_norm from the reported metric columns and compare with the printed values."""

import json
from pathlib import Path

from chartsum.metrics import MetricColumn, s_norm_aggregate

DATA = Path(__file__).resolve().parent.parent / "data" / "reported_scores.json"


def main() -> None:
    doc = json.loads(DATA.read_text())
    systems = tuple(doc["systems"])
    columns = [MetricColumn(systems, c["scores"], c["orientation"], n) for n, c in doc["columns"].items()]
    got = s_norm_aggregate(columns)
    print(f"{'system':<14}{'recomputed':>12}{'reported':>10}{'diff':>8}")
    for name, g, r in zip(systems, got, doc["reported_s_norm"]):
        flag = "" if abs(g - r) <= 0.01 else "  (outside 0.01)"
        print(f"{name:<14}{g:>12.4f}{r:>10.3f}{g - r:>+8.3f}{flag}")


if __name__ == "__main__":
    main()
