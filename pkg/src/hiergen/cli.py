"""Operator command line: gen / train / predict / eval / serve.

Exit codes: 0 ok, 1 user error (bad arguments, refusals, validation),
2 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import GeneratorConfig, generate_synthetic, load_corpus, save_corpus
from .evaluation import evaluate, write_report
from .model import ModelConfig
from .taxonomy import Taxonomy, load_taxonomy
from .training import TrainConfig, train, write_curves_csv


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UserError(message)


def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip() != "")
    except ValueError:
        raise UserError(f"expected comma-separated integers, got '{text}'")


def _prefix_ids(taxonomy: Taxonomy, prefix: str | None) -> list[int] | None:
    if not prefix:
        return None
    try:
        return [taxonomy.by_code(c.strip()).id for c in prefix.split(",")]
    except KeyError as e:
        raise UserError(str(e))


def build_parser() -> _Parser:
    parser = _Parser(prog="hiergen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic taxonomy + corpus")
    gen.add_argument("--out-dir", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--branching", default="4,3,2", help="children per level, e.g. 4,3,2")
    gen.add_argument("--vocab-size", type=int, default=200)
    gen.add_argument("--signal-strength", type=float, default=0.95)
    gen.add_argument("--short-path-fraction", type=float, default=0.25)
    gen.add_argument("--train-size", type=int, default=2000)
    gen.add_argument("--valid-size", type=int, default=250)
    gen.add_argument("--test-size", type=int, default=250)
    gen.add_argument("--force", action="store_true", help="overwrite existing files")

    tr = sub.add_parser("train", help="train a model and write a checkpoint")
    tr.add_argument("--taxonomy", required=True)
    tr.add_argument("--train", dest="train_file", required=True)
    tr.add_argument("--valid", dest="valid_file")
    tr.add_argument("--checkpoint", required=True)
    tr.add_argument("--metrics-log")
    tr.add_argument("--curves-csv")
    tr.add_argument("--hidden-dim", type=int, default=64)
    tr.add_argument("--encoder-layers", type=int, default=8)
    tr.add_argument("--decoder-layers", type=int, default=1)
    tr.add_argument("--heads", type=int, default=8)
    tr.add_argument("--max-seq-len", type=int, default=50)
    tr.add_argument("--dropout", type=float, default=0.2)
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--batch", type=int, default=512)
    tr.add_argument("--weight-decay", type=float, default=1e-5)
    tr.add_argument("--warmup", type=int, default=1000)
    tr.add_argument("--epochs", type=int, default=10)
    tr.add_argument("--seed", type=int, default=0)

    pr = sub.add_parser("predict", help="predict label paths for a corpus file")
    pr.add_argument("--taxonomy", required=True)
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--input", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--prefix", help="expert prefix as comma-separated codes")
    pr.add_argument("--mode", choices=["greedy", "constrained"], default="greedy")
    pr.add_argument("--top-k", type=int, default=5)

    ev = sub.add_parser("eval", help="run the evaluation protocols")
    ev.add_argument("--taxonomy", required=True)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--test", required=True)
    ev.add_argument("--report-dir", required=True)
    ev.add_argument("--mode", choices=["greedy", "constrained"], default="greedy")
    ev.add_argument("--expert-sweep", help="prefix lengths, e.g. 0,1,2")

    sv = sub.add_parser("serve", help="run the HTTP inference service")
    sv.add_argument("--taxonomy", required=True)
    sv.add_argument("--checkpoint", required=True)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8321)
    return parser


def _require_readable(path: str, what: str):
    if not Path(path).is_file():
        raise UserError(f"{what} file not found: {path}")


def cmd_gen(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "taxonomy": out / "taxonomy.json",
        "train": out / "train.jsonl",
        "valid": out / "valid.jsonl",
        "test": out / "test.jsonl",
    }
    existing = [str(p) for p in files.values() if p.exists()]
    if existing and not args.force:
        raise UserError(
            "refusing to overwrite existing files (use --force): " + ", ".join(existing)
        )
    config = GeneratorConfig(
        branching=_parse_ints(args.branching),
        vocab_size=args.vocab_size,
        signal_strength=args.signal_strength,
        short_path_fraction=args.short_path_fraction,
        n_train=args.train_size,
        n_valid=args.valid_size,
        n_test=args.test_size,
    )
    taxonomy, train_set, valid_set, test_set = generate_synthetic(config, args.seed)
    taxonomy.save(files["taxonomy"])
    save_corpus(train_set, taxonomy, files["train"])
    save_corpus(valid_set, taxonomy, files["valid"])
    save_corpus(test_set, taxonomy, files["test"])

    print(f"wrote {', '.join(str(p) for p in files.values())}")
    print(f"{'level':>6}  {'labels':>7}")
    for k in range(1, taxonomy.max_depth + 1):
        print(f"{k:>6}  {taxonomy.level_size(k):>7}")
    depth_counts: dict[int, int] = {}
    for split in (train_set, valid_set, test_set):
        for p in split:
            depth_counts[len(p.gold_path)] = depth_counts.get(len(p.gold_path), 0) + 1
    print(f"{'depth':>6}  {'count':>7}")
    for d in sorted(depth_counts):
        print(f"{d:>6}  {depth_counts[d]:>7}")
    return 0


def cmd_train(args) -> int:
    _require_readable(args.taxonomy, "taxonomy")
    _require_readable(args.train_file, "training corpus")
    taxonomy = load_taxonomy(args.taxonomy)
    train_set = load_corpus(args.train_file, taxonomy)
    valid_set = load_corpus(args.valid_file, taxonomy) if args.valid_file else None
    model_config = ModelConfig(
        hidden_dim=args.hidden_dim,
        encoder_layers=args.encoder_layers,
        decoder_layers=args.decoder_layers,
        num_heads=args.heads,
        max_seq_len=args.max_seq_len,
        dropout_p=args.dropout,
    )
    train_config = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        weight_decay=args.weight_decay,
        warmup_steps=args.warmup,
        epochs=args.epochs,
        seed=args.seed,
    )
    model, history = train(
        train_set,
        model_config,
        train_config,
        taxonomy,
        valid_set=valid_set,
        log_path=args.metrics_log,
    )
    save_checkpoint(model, args.checkpoint)
    if args.curves_csv and history:
        write_curves_csv(history, args.curves_csv)
    if history:
        last = history[-1]
        print(f"epoch {last['epoch']}: train_loss={last['train_loss']:.4f}")
    print(f"checkpoint written to {args.checkpoint}")
    return 0


def cmd_predict(args) -> int:
    _require_readable(args.taxonomy, "taxonomy")
    _require_readable(args.checkpoint, "checkpoint")
    _require_readable(args.input, "input corpus")
    taxonomy = load_taxonomy(args.taxonomy)
    model = load_checkpoint(args.checkpoint, taxonomy)
    proposals = load_corpus(args.input, taxonomy)
    prefix = _prefix_ids(taxonomy, args.prefix)
    with open(args.out, "w", encoding="utf-8") as f:
        for p in proposals:
            pred = model.predict(p, expert_prefix=prefix, mode=args.mode, top_k=args.top_k)
            rec = {
                "id": p.pid,
                "path": taxonomy.codes(pred.path),
                "terminated": pred.path.terminated,
                "score": pred.score,
                "valid_path": taxonomy.validate_path(pred.path),
                "levels": [
                    {
                        "level": s.level,
                        "code": s.code,
                        "prob": s.prob,
                        "alternatives": [
                            {"code": c, "prob": q} for c, q in s.alternatives
                        ],
                    }
                    for s in pred.steps
                ],
            }
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"predictions written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    _require_readable(args.taxonomy, "taxonomy")
    _require_readable(args.checkpoint, "checkpoint")
    _require_readable(args.test, "test corpus")
    taxonomy = load_taxonomy(args.taxonomy)
    model = load_checkpoint(args.checkpoint, taxonomy)
    test_set = load_corpus(args.test, taxonomy)
    if not any(p.gold_path for p in test_set):
        raise UserError(f"{args.test} has no gold labels; nothing to evaluate")
    sweep = list(_parse_ints(args.expert_sweep)) if args.expert_sweep else None
    report = evaluate(model, test_set, mode=args.mode, expert_prefix_lengths=sweep)
    write_report(report, args.report_dir)
    print(report.to_text(), end="")
    print(f"report written to {args.report_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    _require_readable(args.taxonomy, "taxonomy")
    _require_readable(args.checkpoint, "checkpoint")
    taxonomy = load_taxonomy(args.taxonomy)
    model = load_checkpoint(args.checkpoint, taxonomy)
    app = create_app(model)
    bind = os.environ.get("HIERGEN_BIND")
    host, port = args.host, args.port
    if bind:
        host, _, port_text = bind.partition(":")
        port = int(port_text) if port_text else port
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UserError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # pragma: no cover - internal failures
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
