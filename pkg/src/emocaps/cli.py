"""Command-line entry point: preprocess, build-vocab, train, evaluate, predict.

Configuration is a flat JSON file; every key can be overridden by a flag of
the same name, and --profile picks between the full-scale and desk-scale
defaults. train/evaluate/predict consume preprocessed files (whitespace
tokenized), so the text pipeline runs exactly once, in `preprocess`.

Exit codes: 0 success, 2 bad arguments, 3 data or file error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .embeddings import EmbeddingTable, Vocabulary, build_embedding, load_word2vec
from .errors import DimensionMismatch, EmocapsError, EmptyDataset, MalformedLine, NumericError
from .evaluation import LABELS, confusion, format_report, label_index, metrics
from .textprep import Lexicon, preprocess
from .training import ModelParams, TrainConfig, init_model, predict_dataset, train

PROFILES = {
    "paper": {
        "embed_dim": 300,
        "hidden_dim": 128,
        "num_capsules": 16,
        "capsule_dim": 32,
        "batch_size": 512,
    },
    "desk": {
        "embed_dim": 50,
        "hidden_dim": 32,
        "num_capsules": 8,
        "capsule_dim": 8,
        "batch_size": 32,
    },
}

_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _parse_bool(text: str) -> bool:
    try:
        return _BOOL_WORDS[text.lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}") from None


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    """One flag per TrainConfig field, plus --config and --profile."""
    parser.add_argument("--config", help="flat JSON config file; flags override its keys")
    parser.add_argument("--profile", choices=sorted(PROFILES), help="dimension/batch preset")
    for f in fields(TrainConfig):
        kind = _parse_bool if isinstance(f.default, bool) else type(f.default)
        parser.add_argument(
            f"--{f.name.replace('_', '-')}",
            dest=f.name,
            type=kind,
            default=None,
            help=f"default {f.default}",
        )


def _resolve_config(args) -> TrainConfig:
    """Defaults, then profile, then config file, then explicit flags."""
    names = {f.name for f in fields(TrainConfig)}
    values = {}
    if args.profile:
        values.update(PROFILES[args.profile])
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise MalformedLine(f"{args.config}: {exc}") from exc
        unknown = set(loaded) - names - {"profile"}
        if unknown:
            raise MalformedLine(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "profile" in loaded and not args.profile:
            values.update(PROFILES[loaded["profile"]])
        values.update({k: v for k, v in loaded.items() if k in names})
    for name in names:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    cfg = TrainConfig(**values)
    cfg.validate()
    return cfg


def load_dataset(path, labeled: bool = True) -> list:
    """Parse "label<TAB>text" lines (or bare text when labeled=False) into
    (label index or None, text) pairs; label names match case-insensitively."""
    examples = []
    raw = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(raw.splitlines(), 1):
        if not labeled:
            examples.append((None, line))
            continue
        if "\t" not in line:
            raise MalformedLine(f"{path}: expected label<TAB>text", lineno)
        label, text = line.split("\t", 1)
        examples.append((label_index(label), text))
    return examples


def _encode(examples, vocab: Vocabulary):
    """(label, text) pairs -> (ids, label) pairs on whitespace tokens."""
    return [(vocab.encode(text.split()), label) for label, text in examples]


def _require_nonempty(examples, path) -> None:
    if not examples:
        raise EmptyDataset(f"{path} contains no examples")


def _load_lexicon(path) -> Lexicon:
    return Lexicon.from_file(path) if path else Lexicon.from_pairs([])


def cmd_preprocess(args) -> int:
    lex = _load_lexicon(args.lexicon)
    examples = load_dataset(args.input, labeled=not args.unlabeled)
    lines = []
    for label, text in examples:
        tokens = " ".join(preprocess(text, lex))
        lines.append(tokens if label is None else f"{LABELS[label]}\t{tokens}")
    Path(args.output).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    print(f"wrote {len(lines)} lines to {args.output}")
    return 0


def cmd_build_vocab(args) -> int:
    cfg = _resolve_config(args)
    sequences = []
    for path in args.inputs:
        examples = load_dataset(path, labeled=not args.unlabeled)
        _require_nonempty(examples, path)
        sequences.extend(text.split() for _, text in examples)
    vocab = Vocabulary.build(sequences)
    vocab.save(args.vocab)

    raw = {}
    if args.embeddings:
        raw = load_word2vec(args.embeddings, fmt=args.embeddings_format)
    table = build_embedding(vocab, raw, cfg.embed_dim, cfg.seed)
    save_checkpoint(
        args.embedding_out,
        {"embedding/W_e": table.weights},
        {"embed_dim": cfg.embed_dim, "vocab_size": len(vocab)},
        cfg.seed,
    )
    covered = sum(1 for w in vocab.word_to_id if w in raw)
    print(f"vocabulary: {len(vocab)} words ({covered} pretrained) -> {args.vocab}")
    return 0


def _load_embedding_payload(stem, vocab: Vocabulary, cfg: TrainConfig) -> EmbeddingTable:
    tensors, _ = load_checkpoint(stem)
    W = tensors["embedding/W_e"]
    if W.shape[0] != len(vocab):
        raise DimensionMismatch(
            f"embedding payload has {W.shape[0]} rows, vocabulary has {len(vocab)}"
        )
    if W.shape[1] != cfg.embed_dim:
        # payload wins; dims must agree with the model we are about to build
        cfg.embed_dim = W.shape[1]
    return EmbeddingTable(weights=W.astype(np.float64))


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    vocab = Vocabulary.load(args.vocab)
    train_examples = load_dataset(args.train_file)
    _require_nonempty(train_examples, args.train_file)
    train_set = _encode(train_examples, vocab)
    if args.dev_file:
        dev_examples = load_dataset(args.dev_file)
        _require_nonempty(dev_examples, args.dev_file)
        dev_set = _encode(dev_examples, vocab)
    else:
        dev_set = train_set

    if args.embeddings_payload:
        table = _load_embedding_payload(args.embeddings_payload, vocab, cfg)
    else:
        table = build_embedding(vocab, {}, cfg.embed_dim, cfg.seed)
    params = init_model(cfg, table)

    clock = time.perf_counter if args.wall_clock else None
    params, history = train(train_set, dev_set, params, cfg, clock=clock)

    out = Path(args.checkpoint_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model", params.tensors(), cfg.__dict__.copy(), cfg.seed)
    with open(out / "history.jsonl", "w", encoding="utf-8") as fh:
        for row in history:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    best = max(h["dev_macro_f1"] for h in history)
    print(f"trained {len(history)} epochs, best dev macro-F1 {best:.4f} -> {out}")
    return 0


def _load_model(checkpoint, vocab: Vocabulary):
    tensors, manifest = load_checkpoint(checkpoint)
    names = {f.name for f in fields(TrainConfig)}
    hp = {k: v for k, v in manifest.get("hyperparameters", {}).items() if k in names}
    cfg = TrainConfig(**hp)
    params = ModelParams.from_tensors(tensors)
    if params.embedding.weights.shape[0] != len(vocab):
        raise DimensionMismatch(
            f"checkpoint embeds {params.embedding.weights.shape[0]} words, "
            f"vocabulary has {len(vocab)}"
        )
    return params, cfg


def cmd_evaluate(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    params, cfg = _load_model(args.checkpoint, vocab)
    examples = load_dataset(args.input)
    _require_nonempty(examples, args.input)
    encoded = _encode(examples, vocab)
    preds = predict_dataset([ids for ids, _ in encoded], params, cfg)
    golds = [gold for _, gold in encoded]
    report = metrics(confusion(golds, preds))
    if args.output:
        Path(args.output).write_text(
            json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    print(format_report(report))
    print(f"macro-F1 {report.macro.f1:.4f}")
    return 0


def cmd_predict(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    params, cfg = _load_model(args.checkpoint, vocab)
    examples = load_dataset(args.input, labeled=args.labeled)
    encoded = _encode(examples, vocab)
    preds = predict_dataset([ids for ids, _ in encoded], params, cfg)
    lines = [LABELS[p] for p in preds]
    Path(args.output).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    print(f"wrote {len(lines)} predictions to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emocaps",
        description="implicit emotion classification with a BiGRU-capsule model",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="tokenize and normalize raw tweets")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--lexicon", help="word<TAB>count file for hashtags and spelling")
    p.add_argument("--unlabeled", action="store_true", help="input has no label column")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("build-vocab", help="build vocabulary and embedding payload")
    p.add_argument("--inputs", nargs="+", required=True, help="preprocessed files")
    p.add_argument("--vocab", required=True, help="vocabulary output path")
    p.add_argument("--embedding-out", required=True, help="embedding payload stem")
    p.add_argument("--embeddings", help="pretrained word2vec file")
    p.add_argument("--embeddings-format", choices=("binary", "text"), default="binary")
    p.add_argument("--unlabeled", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("train", help="train on preprocessed data")
    p.add_argument("--train-file", required=True)
    p.add_argument("--dev-file", help="defaults to the training file")
    p.add_argument("--vocab", required=True)
    p.add_argument("--embeddings-payload", help="stem written by build-vocab")
    p.add_argument("--checkpoint-dir", required=True)
    p.add_argument(
        "--wall-clock",
        action="store_true",
        help="record real epoch durations (history files then differ across runs)",
    )
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a labeled file against a checkpoint")
    p.add_argument("--input", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint", required=True, help="checkpoint stem")
    p.add_argument("--output", help="write the report as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="write one label per input line")
    p.add_argument("--input", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint", required=True, help="checkpoint stem")
    p.add_argument("--output", required=True)
    p.add_argument("--labeled", action="store_true", help="input has a label column to ignore")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except EmocapsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # config value out of range: an argument problem, not a data problem
        print(f"bad arguments: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    raise SystemExit(main())
