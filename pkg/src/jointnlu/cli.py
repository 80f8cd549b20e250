"""Command-line entry point: ``jointnlu {prepare,train,eval,predict,inspect,bench}``.

Every flag can also be supplied through ``--config file.json`` (keys are the
flag names with dashes replaced by underscores); flags given on the command
line win over the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import build_vocabularies, read_corpus, split_validation, write_native
from .embeddings import read_contextual, read_embeddings
from .evaluation import evaluate
from .model import (
    TASKS,
    VARIANTS,
    ModelConfig,
    build,
    closed_form_parameter_count,
    count_parameters,
    load_model,
    predict_batch,
    save_model,
)
from .train import TrainConfig, epoch_timer, fit, fit_single_task

log = logging.getLogger("jointnlu")


class UsageError(Exception):
    pass


def _word_source(args):
    if getattr(args, "contextual", None):
        return read_contextual(args.contextual)
    if not args.embeddings:
        raise UsageError("--embeddings (or --contextual) is required")
    return read_embeddings(args.embeddings)


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _load_train_split(args):
    corpus = read_corpus(args.train, args.format)
    if args.val:
        return corpus, corpus, read_corpus(args.val, args.format)
    train, val = split_validation(corpus, args.val_fraction, args.seed)
    return corpus, train, val


def _model_config(args, word_dim: int) -> ModelConfig:
    return ModelConfig(
        variant=args.variant, word_dim=word_dim, char_emb_dim=args.char_emb_dim,
        char_filters=args.char_filters, char_width=args.char_width, max_char_len=args.max_char_len,
        hidden=args.hidden, dropout_rate=args.dropout, init_seed=args.seed,
    )


def _train_config(args, max_epochs: int) -> TrainConfig:
    return TrainConfig(batch_size=args.batch_size, max_epochs=max_epochs, patience=args.patience,
                       shuffle_seed=args.seed, lr=args.lr)


# ---------------------------------------------------------------- commands


def cmd_prepare(args) -> int:
    _require(args, "input", "output")
    corpus = read_corpus(args.input, args.format)
    with open(args.output, "w", encoding="utf-8") as fh:
        write_native(corpus, fh)
    print(f"wrote {len(corpus)} utterances to {args.output}")
    return 0


def cmd_train(args) -> int:
    _require(args, "train", "out")
    words = _word_source(args)
    full, train, val = _load_train_split(args)
    vocabs = build_vocabularies(full)
    model = build(_model_config(args, words.dim), vocabs)
    config = _train_config(args, args.max_epochs)
    if args.task == "joint":
        model, history = fit(model, train, val, words, config)
    else:
        model, history = fit_single_task(model, train, val, words, config, task=args.task)
    save_model(model, args.out)
    history_path = args.history or f"{args.out}.history.jsonl"
    Path(history_path).write_text(history.to_jsonl(), encoding="utf-8")
    best = history.records[history.best_epoch]
    print(json.dumps({
        "checkpoint": str(args.out),
        "history": str(history_path),
        "variant": args.variant,
        "task": args.task,
        "epochs": len(history),
        "best_epoch": history.best_epoch,
        "best_val_loss": best.val_loss,
        "stopped_early": history.stopped_early,
        "mean_epoch_seconds": epoch_timer(history),
        "parameters": count_parameters(model, args.task),
        "slot_loss_weight": history.slot_loss_weight,
        "intent_loss_weight": history.intent_loss_weight,
    }, indent=2))
    return 0


def cmd_eval(args) -> int:
    _require(args, "model", "test", "report")
    model = load_model(args.model)
    words = _word_source(args)
    corpus = read_corpus(args.test, args.format)
    report = evaluate(model, corpus, words)
    Path(args.report).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"utterances      {report.n_utterances}")
    print(f"intent accuracy {report.intent_accuracy:.4f}")
    print(f"slot precision  {report.slot_precision:.4f}")
    print(f"slot recall     {report.slot_recall:.4f}")
    print(f"slot F1         {report.slot_f1:.4f}")
    return 0


def cmd_predict(args) -> int:
    _require(args, "model")
    model = load_model(args.model)
    words = _word_source(args)
    for line in sys.stdin:
        tokens = line.split()
        if not tokens:
            continue
        pred = predict_batch(model, [tokens], words)[0]
        print(json.dumps(pred.to_dict(), ensure_ascii=False), flush=True)
    return 0


def cmd_inspect(args) -> int:
    _require(args, "model")
    model = load_model(args.model)
    v = model.vocabs
    sizes = {"tokens": len(v.token_to_id), "chars": len(v.char_to_id),
             "slots": len(v.slot_to_id), "intents": len(v.intent_to_id)}
    print(json.dumps({
        "config": model.config.__dict__,
        "vocabulary_sizes": sizes,
        "parameters": count_parameters(model),
        "parameters_closed_form": closed_form_parameter_count(model.config, sizes["chars"], sizes["slots"],
                                                              sizes["intents"]),
        "parameters_by_array": {k: p.size for k, p in model.params.items()},
    }, indent=2))
    return 0


def cmd_bench(args) -> int:
    _require(args, "train")
    if args.epochs is None or args.epochs < 1:
        raise UsageError("--epochs must be >= 1")
    words = _word_source(args)
    full, train, val = _load_train_split(args)
    model = build(_model_config(args, words.dim), build_vocabularies(full))
    print(f"{'epoch':>5}  {'seconds':>8}  {'train_loss':>10}  {'val_loss':>8}")

    def row(r):
        print(f"{r.epoch:>5}  {r.seconds:>8.3f}  {r.train_loss:>10.4f}  {r.val_loss:>8.4f}", flush=True)

    _, history = fit(model, train, val, words, _train_config(args, args.epochs), on_epoch=row,
                     early_stopping=False)
    print(f"mean seconds per epoch ({args.variant}): {epoch_timer(history):.3f}")
    return 0


# ---------------------------------------------------------------- parser


def _add_model_flags(p):
    p.add_argument("--variant", choices=VARIANTS, default="recurrent")
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--char-emb-dim", type=int, default=25)
    p.add_argument("--char-filters", type=int, default=30)
    p.add_argument("--char-width", type=int, default=3)
    p.add_argument("--max-char-len", type=int, default=20)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--patience", type=int, default=2)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--val", help="explicit validation corpus (default: hold out --val-fraction of --train)")
    p.add_argument("--val-fraction", type=float, default=0.1)


def _add_common(p):
    p.add_argument("--config", help="JSON file whose keys mirror the flags")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("native", "ctf"), default=None,
                   help="corpus format (default: by extension, .ctf means ctf)")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="jointnlu", description="Joint intent classification and IOB slot tagging.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["prepare"] = sub.add_parser("prepare", help="convert a corpus to the native format")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--output")
    p.set_defaults(func=cmd_prepare)

    p = subs["train"] = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--train")
    p.add_argument("--embeddings")
    p.add_argument("--contextual", help="CTXV store of per-token vectors keyed by utterance id and position")
    p.add_argument("--out")
    p.add_argument("--history", help="history JSONL path (default: <out>.history.jsonl)")
    p.add_argument("--task", choices=TASKS, default="joint")
    p.add_argument("--max-epochs", type=int, default=50)
    p.set_defaults(func=cmd_train)

    p = subs["eval"] = sub.add_parser("eval", help="score a checkpoint on a test corpus")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--test")
    p.add_argument("--embeddings")
    p.add_argument("--contextual")
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = subs["predict"] = sub.add_parser("predict", help="tag whitespace-tokenized lines from stdin")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--embeddings")
    p.set_defaults(func=cmd_predict)

    p = subs["inspect"] = sub.add_parser("inspect", help="print a checkpoint's config and parameter count")
    _add_common(p)
    p.add_argument("--model")
    p.set_defaults(func=cmd_inspect)

    p = subs["bench"] = sub.add_parser("bench", help="time training epochs")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--train")
    p.add_argument("--embeddings")
    p.add_argument("--contextual")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_bench)
    return parser, subs


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        sub = subs[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(file_cfg) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        sub.set_defaults(**file_cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (UsageError, OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"jointnlu: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
