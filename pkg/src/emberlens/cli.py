"""Command-line entry points for the pipeline.

Subcommands cover the full flow at desk scale: synthesize fixtures, validate
and vectorize a corpus, score and explain samples, export prompt/reference
pairs, run a full evaluation with report artifacts, and size adapter plans.
Domain errors print one line to stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import grouping, harness, loraplan, synth
from .featurize import vectorize, write_vectors
from .gateway import GatewayError
from .gbdt import parse_model, predict_score
from .harness import EvalConfig, ModelUnderTest
from .ingest import DatasetError, Label, load_dataset
from .narrative import build_reference, confidence_band, verdict
from .treeshap import explain, explain_interventional


def _read_model(path: str):
    return parse_model(Path(path).read_text(encoding="utf-8"))


def cmd_synth(args) -> int:
    records = synth.generate_corpus(args.benign, args.malicious, seed=args.seed)
    synth.write_corpus(args.out_corpus, records)
    model_text = synth.train_model(
        records, num_trees=args.trees, max_depth=args.depth, seed=args.seed
    )
    Path(args.out_model).write_text(model_text, encoding="utf-8")
    print(f"corpus: {len(records)} records -> {args.out_corpus}")
    print(f"model: {args.trees} trees -> {args.out_model}")
    return 0


def cmd_ingest(args) -> int:
    stream = load_dataset(args.corpus, on_error="skip" if args.skip_errors else "abort")
    counts = {Label.BENIGN: 0, Label.MALICIOUS: 0, Label.UNLABELED: 0}
    for record in stream:
        counts[record.label] += 1
    total = sum(counts.values())
    print(f"records: {total}")
    print(f"benign: {counts[Label.BENIGN]}")
    print(f"malicious: {counts[Label.MALICIOUS]}")
    print(f"unlabeled: {counts[Label.UNLABELED]}")
    if args.skip_errors:
        print(f"skipped: {stream.skipped}")
        for line_number, message in stream.errors[:10]:
            print(f"  line {line_number}: {message}", file=sys.stderr)
    return 0


def cmd_vectorize(args) -> int:
    stream = load_dataset(args.corpus, on_error="skip" if args.skip_errors else "abort")
    count = write_vectors(args.out, (vectorize(r) for r in stream))
    print(f"vectors: {count} -> {args.out}")
    return 0


def cmd_score(args) -> int:
    ensemble = _read_model(args.model)
    wanted = set(args.ids.split(",")) if args.ids else None
    found = 0
    for record in load_dataset(args.corpus):
        if wanted is not None and record.sha256 not in wanted:
            continue
        found += 1
        score = predict_score(ensemble, vectorize(record))
        print(f"{record.sha256}  {score:.6f}  {verdict(score)}")
    if wanted is not None and found < len(wanted):
        print(f"error: {len(wanted) - found} requested ids not in corpus", file=sys.stderr)
        return 2
    return 0


def cmd_explain(args) -> int:
    ensemble = _read_model(args.model)
    record = None
    background = []
    for candidate in load_dataset(args.corpus):
        if candidate.sha256 == args.id:
            record = candidate
        elif args.interventional and len(background) < args.background:
            background.append(vectorize(candidate).values)
    if record is None:
        print(f"error: sample {args.id} not in corpus", file=sys.stderr)
        return 2

    vector = vectorize(record)
    score = predict_score(ensemble, vector)
    if args.interventional:
        if not background:
            print("error: no background rows available", file=sys.stderr)
            return 2
        import numpy as np

        attribution = explain_interventional(ensemble, vector, np.stack(background))
    else:
        attribution = explain(ensemble, vector)

    shares = grouping.aggregate(attribution)
    print(f"sample: {record.sha256}")
    print(f"score: {score:.6f} ({verdict(score)}, {confidence_band(score)})")
    print(f"margin: {attribution.total():+.6f} (base {attribution.base_value:+.6f})")
    print("groups:")
    for share in shares:
        print(
            f"  {share.display_name:32s} {share.value:+12.6f}  "
            f"share {share.abs_share:6.1%}  {share.impact}"
        )
    print(f"reference: {build_reference(score, shares, k=args.k)}")
    return 0


def _flag_config(args, scope: str) -> EvalConfig:
    return EvalConfig(
        corpus=args.corpus,
        model=args.model,
        output_dir=".",
        models=[ModelUnderTest("reference")],
        seed=args.seed,
        scope=scope,
    )


def cmd_gen_truth(args) -> int:
    rows = harness.gen_truth(_flag_config(args, args.scope))
    with open(args.out, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row) + "\n")
    print(f"truth rows: {len(rows)} -> {args.out}")
    return 0


def _parse_models_flag(text: str) -> list[dict]:
    models = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            model_id, _, rate = part.partition(":")
            models.append({"model_id": model_id, "degradation": float(rate)})
        else:
            models.append({"model_id": part})
    return models


def cmd_evaluate(args) -> int:
    overrides = {
        "corpus": args.corpus,
        "model": args.model,
        "output_dir": args.output_dir,
        "seed": args.seed,
        "scope": args.scope,
        "provider": args.provider,
        "base_url": args.base_url,
        "embedding_model": args.embedding_model,
        "concurrency": args.concurrency,
        "models": _parse_models_flag(args.models) if args.models else None,
    }
    config = harness.load_config(args.config, overrides)
    results = harness.run_eval(config)
    written = harness.emit_report(results, config)
    per_model = harness.summarize_results(results)
    for model_id in sorted(per_model):
        stats = per_model[model_id]
        print(
            f"{model_id}: rouge1 {stats['mean_rouge1']:.4f}  "
            f"rougeL {stats['mean_rougel']:.4f}  bleu {stats['mean_bleu']:.4f}  "
            f"semantic {stats['mean_semantic']:.4f}  "
            f"({stats['samples']} samples, {stats['excluded']} excluded)"
        )
    for path in written:
        print(f"wrote {path}")
    return 0


def _ranks(text: str) -> list[int]:
    try:
        ranks = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad rank list {text!r}") from exc
    if not ranks:
        raise argparse.ArgumentTypeError("rank list is empty")
    return ranks


def cmd_lora_plan(args) -> int:
    spec = loraplan.load_spec(args.spec) if args.spec else loraplan.DEFAULT_SPEC
    plans = loraplan.plan_table(spec, args.ranks)
    print(f"base model: {spec.name} ({spec.base_params:,} params, "
          f"{spec.injection_points} injection points)")
    print(loraplan.format_table(plans))
    if args.csv:
        Path(args.csv).write_text(loraplan.to_csv(plans), encoding="utf-8")
        print(f"wrote {args.csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emberlens",
        description="Score PE feature records, explain the scores, and "
        "evaluate generated explanations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus and model")
    p.add_argument("--out-corpus", required=True)
    p.add_argument("--out-model", required=True)
    p.add_argument("--benign", type=int, default=550)
    p.add_argument("--malicious", type=int, default=550)
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("ingest", help="validate a JSONL corpus and count labels")
    p.add_argument("--corpus", required=True)
    p.add_argument("--skip-errors", action="store_true")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("vectorize", help="write feature vectors to a binary file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--skip-errors", action="store_true")
    p.set_defaults(handler=cmd_vectorize)

    p = sub.add_parser("score", help="print malware scores for corpus records")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--ids", help="comma-separated sample ids (default: all)")
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("explain", help="per-group attribution for one sample")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--interventional", action="store_true",
                   help="marginalize over corpus background rows instead of covers")
    p.add_argument("--background", type=int, default=20,
                   help="background rows for --interventional")
    p.set_defaults(handler=cmd_explain)

    p = sub.add_parser("gen-truth", help="export prompt/reference pairs for a split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scope", choices=("train", "test", "focus"), default="train")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_gen_truth)

    p = sub.add_parser("evaluate", help="run the evaluation and write reports")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus")
    p.add_argument("--model")
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--scope", choices=("train", "test", "focus"))
    p.add_argument("--provider", choices=("mock", "http"))
    p.add_argument("--base-url")
    p.add_argument("--embedding-model")
    p.add_argument("--concurrency", type=int)
    p.add_argument("--models", help="override: id[:degradation],id[:degradation],...")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("lora-plan", help="size adapter checkpoints for a rank sweep")
    p.add_argument("--ranks", type=_ranks, default=[16, 96, 256, 512, 896])
    p.add_argument("--spec", help="JSON base-model spec (default: built-in 1.1B)")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(handler=cmd_lora_plan)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (DatasetError, GatewayError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
