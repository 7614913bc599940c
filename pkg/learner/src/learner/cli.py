"""Command-line front end: train / evaluate / baseline / agreement.

Exit codes: 0 success, 1 bad usage or config, 2 runtime failure (training
divergence, oracle mismatch, malformed shard).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import metrics, ngram
from .data import WireError, load_dataset, load_vocab
from .model import ModelConfig
from .training import TrainingDiverged, train


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        layers=args.layers,
        dim=args.dim,
        ff_dim=args.ff_dim,
        lr=args.lr,
        batch_size=args.batch_size,
        sig_digits=args.sig_digits,
        dropout=args.dropout,
        max_src_len=args.max_src_len,
        max_tgt_len=args.max_tgt_len,
    )


def _cmd_train(args) -> int:
    cfg = _model_config(args)
    vocab = load_vocab(args.vocab)
    dataset = load_dataset(args.shards)
    if not args.skip_oracle_check:
        metrics.assert_oracle_grounded(dataset)
    eval_pairs = None
    if args.eval_shard:
        eval_pairs = list(load_dataset([args.eval_shard]).pairs)
        if args.eval_limit:
            eval_pairs = eval_pairs[: args.eval_limit]
    result = train(
        cfg,
        list(dataset.pairs),
        vocab,
        args.out,
        seed=args.seed,
        epochs=args.epochs,
        max_steps=args.max_steps,
        eval_pairs=eval_pairs,
        eval_every=args.eval_every,
        log_every=args.log_every,
        quiet=args.quiet,
    )
    print(
        json.dumps(
            {
                "checkpoint": result.checkpoint,
                "curve": result.curve_path,
                "steps": result.steps,
                "examples_seen": result.examples_seen,
                "dropped_long": result.dropped_long,
                "epoch_losses": result.epoch_losses,
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_evaluate(args) -> int:
    report = metrics.evaluate(
        args.checkpoint,
        args.shards,
        args.metric,
        batch_size=args.batch_size,
        limit=args.limit,
        skip_oracle_check=args.skip_oracle_check,
    )
    print(report.to_json())
    return 0


def _cmd_baseline(args) -> int:
    report = ngram.ngram_baseline(
        args.train_shards,
        args.test_shards,
        args.vocab,
        max_n=args.max_n,
        dim=args.dim,
        passes=args.passes,
        alpha=args.alpha,
        seed=args.seed,
        skip_oracle_check=args.skip_oracle_check,
    )
    print(report.to_json())
    return 0


def _cmd_agreement(args) -> int:
    rates = {}
    for shard in args.shards:
        task = args.task or load_dataset([shard]).task
        rates[shard] = metrics.oracle_agreement(shard, task)
    print(json.dumps(rates, sort_keys=True))
    return 0 if all(r == 1.0 for r in rates.values()) else 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="learner")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit the transformer on TSV shards")
    p.add_argument("--shards", nargs="+", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--ff-dim", type=int, default=512)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--sig-digits", type=int, default=None, choices=(2, 3, 4))
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--max-src-len", type=int, default=256)
    p.add_argument("--max-tgt-len", type=int, default=96)
    p.add_argument("--eval-shard")
    p.add_argument("--eval-limit", type=int, default=512)
    p.add_argument("--eval-every", type=int, default=None)
    p.add_argument("--log-every", type=int, default=50)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--skip-oracle-check", action="store_true")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on shards")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--shards", nargs="+", required=True)
    p.add_argument("--metric", required=True, choices=metrics.METRICS)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--skip-oracle-check", action="store_true")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("baseline", help="hashed n-gram linear baseline")
    p.add_argument("--train-shards", nargs="+", required=True)
    p.add_argument("--test-shards", nargs="+", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--max-n", type=int, default=5)
    p.add_argument("--dim", type=int, default=1 << 18)
    p.add_argument("--passes", type=int, default=2)
    p.add_argument("--alpha", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-oracle-check", action="store_true")
    p.set_defaults(fn=_cmd_baseline)

    p = sub.add_parser("agreement", help="oracle relabel rate per shard")
    p.add_argument("--shards", nargs="+", required=True)
    p.add_argument("--task", default=None)
    p.set_defaults(fn=_cmd_agreement)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return args.fn(args)
    except (ValueError, WireError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (TrainingDiverged, metrics.OracleMismatch, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
