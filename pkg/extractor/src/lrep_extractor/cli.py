"""Command line for the extractor: model + JSONL dataset in, LREP file out."""

from __future__ import annotations

import argparse
import json
import sys

from .extract import ExtractionJob, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrep-extract", description=__doc__)
    parser.add_argument("--model", required=True, help="model id or local checkpoint path")
    parser.add_argument("--data", required=True, help="JSONL dataset path")
    parser.add_argument("--task", choices=["classification", "pair"], default="classification")
    parser.add_argument("--out", required=True, help="LREP output path")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--max-length", type=int, default=128)
    parser.add_argument("--default-split", choices=["train", "validation", "test"], default="test")
    parser.add_argument("--score-scale", type=float, default=1.0,
                        help="divide pair scores by this (5 for 0-5 similarity scales)")
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    job = ExtractionJob(
        model=args.model,
        dataset=args.data,
        task=args.task,
        output=args.out,
        batch_size=args.batch_size,
        max_length=args.max_length,
        default_split=args.default_split,
        score_scale=args.score_scale,
        device=args.device,
    )
    try:
        summary = extract(job)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
