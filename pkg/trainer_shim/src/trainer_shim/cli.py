"""Command-line entry points: train on exported pairs, serve the result."""

from __future__ import annotations

import argparse
import logging
import sys

from .data import DataError, load_pairs
from .serve import start_server
from .train import TrainConfig, train


def cmd_train(args) -> int:
    pairs = load_pairs(args.data)
    if args.max_pairs is not None:
        pairs = pairs[: args.max_pairs]
    cfg = TrainConfig(
        mode=args.mode,
        rank=args.rank,
        alpha=args.alpha,
        dropout=args.dropout,
        lr=args.lr,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        grad_accum=args.grad_accum,
        epochs=args.epochs,
        warmup_steps=args.warmup_steps,
        seed=args.seed,
        vocab_size=args.vocab_size,
    )
    result = train(pairs, cfg, args.out)
    print(f"mode: {result.mode}  pairs: {len(pairs)}  steps: {result.steps}")
    print(f"loss: {result.initial_loss:.4f} -> {result.final_loss:.4f}")
    if result.adapter_params:
        print(f"adapter parameters: {result.adapter_params:,}")
    print(f"artifacts: {result.out_dir}")
    return 0


def cmd_serve(args) -> int:
    server = start_server(args.artifacts, host=args.host, port=args.port,
                          workers=args.workers)
    host, port = server.server_address[:2]
    print(f"serving {args.artifacts} at http://{host}:{port}/v1", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trainer-shim",
        description="Toy fine-tuning of a stand-in chat model on exported "
        "prompt/reference pairs, plus a wire-compatible inference server.",
    )
    parser.add_argument("--verbose", action="store_true", help="log per-step losses")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune and write an artifact directory")
    p.add_argument("--data", required=True, help="JSONL with prompt/reference rows")
    p.add_argument("--out", required=True, help="artifact directory")
    p.add_argument("--mode", choices=("lora", "full"), default="lora")
    p.add_argument("--rank", type=int, default=16)
    p.add_argument("--alpha", type=float, default=32.0)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=0.0,
                   help="0 selects the per-mode default (5e-5 lora, 5e-6 full)")
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--grad-accum", type=int, default=0,
                   help="0 selects the per-mode default (4 lora, 8 full)")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--warmup-steps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", type=int, default=512)
    p.add_argument("--max-pairs", type=int, default=None,
                   help="use only the first N pairs from the data file")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("serve", help="serve an artifact directory over HTTP")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return args.handler(args)
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
