"""Command-line interface: ``iocner {pretrain,train,tag,eval,baseline,features}``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

from .baseline import baseline_tag, build_lexicon
from .corpus import (
    DEFAULT_SCHEME,
    BIOError,
    CorpusError,
    Sentence,
    Token,
    format_corpus,
    load_corpus,
    read_text_sentences,
    spans_from_bio,
)
from .embeddings import load_embeddings, pretrain_skipgram, save_embeddings
from .evaluation import entity_prf, format_records, format_table
from .features import FEATURE_NAMES, FeatureConfig, compute_features
from .trainer import (
    CheckpointError,
    NonFiniteLossError,
    TrainConfig,
    load_model,
    save_model,
    train,
)

EXIT_USAGE = 1
EXIT_IO = 2
EXIT_EMPTY = 3
EXIT_SCHEME = 4
EXIT_NUMERIC = 5
EXIT_CHECKPOINT = 6

log = logging.getLogger("iocner")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _read_text(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None


def _write_output(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None


def _load_labelled(path, repair=False):
    try:
        return load_corpus(path, DEFAULT_SCHEME, repair=repair)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None
    except BIOError as exc:
        raise CliError(str(exc), EXIT_SCHEME) from None
    except CorpusError as exc:
        code = EXIT_SCHEME if "unknown label" in str(exc) else EXIT_IO
        raise CliError(str(exc), code) from None


def _read_token_columns(text):
    """Sentences from one-token-per-line text; a second column is ignored."""
    sentences, current = [], []
    for line in text.splitlines():
        if not line.strip():
            if current:
                sentences.append(current)
                current = []
            continue
        current.append(Token(line.split("\t", 1)[0]))
    if current:
        sentences.append(current)
    return sentences


def _read_input(args):
    if getattr(args, "text", None) is not None:
        return read_text_sentences(args.text)
    text = _read_text(args.input) if args.input not in (None, "-") else sys.stdin.read()
    if args.input_format == "conll":
        return _read_token_columns(text)
    return read_text_sentences(text)


def _feature_config(args):
    try:
        return FeatureConfig.load(args.tld_path, getattr(args, "malware_path", None))
    except OSError as exc:
        raise CliError(f"cannot read feature list: {exc}", EXIT_IO) from None


def _render(sentences, labels, fmt):
    if fmt == "conll":
        return format_corpus([Sentence(s) for s in sentences], labels)
    blocks = []
    for toks, labs in zip(sentences, labels):
        lines = []
        for span in spans_from_bio(labs, DEFAULT_SCHEME):
            surface = " ".join(t.surface for t in toks[span.start:span.end])
            lines.append(f"{span.start}\t{span.end}\t{span.entity_type}\t{surface}")
        blocks.append("".join(line + "\n" for line in lines) + "\n")
    return "".join(blocks)


# ------------------------------------------------------------ commands


def cmd_pretrain(args):
    texts = []
    for path in args.corpus:
        texts += read_text_sentences(_read_text(path))
    if not texts:
        raise CliError("pretraining corpus is empty", EXIT_EMPTY)
    start = time.perf_counter()
    vocab, table = pretrain_skipgram(
        [[t.surface for t in s] for s in texts], dim=args.dim, window=args.window,
        min_count=args.min_count, iterations=args.iterations, negatives=args.negatives,
        seed=args.seed, workers=args.workers)
    try:
        save_embeddings(args.output, vocab, table)
    except OSError as exc:
        raise CliError(f"cannot write {args.output}: {exc}", EXIT_IO) from None
    print(f"vocabulary {len(vocab) - 1} tokens, dim {args.dim}, "
          f"{time.perf_counter() - start:.1f}s")


def cmd_train(args):
    train_set = _load_labelled(args.train, args.repair_bio)
    val_set = _load_labelled(args.val, args.repair_bio) if args.val else None
    if not train_set:
        raise CliError(f"{args.train}: no sentences", EXIT_EMPTY)
    overrides = {f.name: getattr(args, f.name, None) for f in fields(TrainConfig)}
    if args.no_features:
        overrides["use_features"] = False
    try:
        if args.config:
            config = TrainConfig.from_file(args.config, **overrides)
        else:
            config = TrainConfig(**{k: v for k, v in overrides.items() if v is not None})
    except OSError as exc:
        raise CliError(f"cannot read {args.config}: {exc}", EXIT_IO) from None
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad configuration: {exc}", EXIT_USAGE) from None
    pretrained = None
    if args.embeddings:
        try:
            pretrained = load_embeddings(args.embeddings, seed=config.seed)
        except OSError as exc:
            raise CliError(f"cannot read {args.embeddings}: {exc}", EXIT_IO) from None
        except ValueError as exc:
            raise CliError(str(exc), EXIT_IO) from None
        if pretrained[1].shape[1] != config.token_dim:
            raise CliError(f"embedding dim {pretrained[1].shape[1]} != token_dim "
                           f"{config.token_dim}", EXIT_USAGE)

    def report(rec):
        print(f"epoch {rec.epoch:3d}  loss {rec.train_loss:10.4f}  val-F1 {rec.val_f1:.4f}"
              f"{'  *' if rec.best else ''}", flush=True)

    try:
        net, history = train(train_set, val_set, config, pretrained, DEFAULT_SCHEME,
                             _feature_config(args), callback=None if args.quiet else report)
    except NonFiniteLossError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from None
    try:
        save_model(net, args.model, config)
    except OSError as exc:
        raise CliError(f"cannot write {args.model}: {exc}", EXIT_IO) from None
    _write_output(args.history or f"{args.model}.history.tsv", history.to_tsv())
    print(f"best epoch {history.best_epoch} val-F1 {max(history.val_f1):.4f}; "
          f"saved {args.model}")


def cmd_tag(args):
    try:
        net, _ = load_model(args.model)
    except OSError as exc:
        raise CliError(f"cannot read {args.model}: {exc}", EXIT_IO) from None
    except CheckpointError as exc:
        raise CliError(str(exc), EXIT_CHECKPOINT) from None
    sentences = _read_input(args)
    if args.workers > 1:
        with ThreadPoolExecutor(args.workers) as pool:
            labels = list(pool.map(net.tag, sentences))
    else:
        labels = [net.tag(s) for s in sentences]
    _write_output(args.output, _render(sentences, labels, args.format))


def cmd_eval(args):
    gold = _load_labelled(args.gold)
    pred = _load_labelled(args.pred)
    if len(gold) != len(pred):
        raise CliError(f"{len(gold)} gold sentences but {len(pred)} predicted", EXIT_USAGE)
    for k, (g, p) in enumerate(zip(gold, pred)):
        if g.surfaces != p.surfaces:
            raise CliError(f"sentence {k + 1}: tokens differ between gold and prediction",
                           EXIT_USAGE)
    metrics = entity_prf(gold, pred, DEFAULT_SCHEME, token_level=args.token_level)
    if args.format == "records":
        text = format_records(metrics)
    else:
        title = "token-level scores" if args.token_level else "span-level scores (exact match)"
        text = format_table(metrics, title)
    _write_output(args.output, text)


def cmd_baseline(args):
    train_set = _load_labelled(args.train)
    config = _feature_config(args)
    lexicon = build_lexicon(train_set, DEFAULT_SCHEME)
    counts = {}
    for t in lexicon.values():
        counts[t] = counts.get(t, 0) + 1
    print("lexicon: " + ", ".join(f"{t}={counts.get(t, 0)}" for t in
                                  ("attacker", "attack method", "attack target")),
          file=sys.stderr)
    sentences = _read_input(args)
    labels = [baseline_tag(s, lexicon, config, DEFAULT_SCHEME) for s in sentences]
    _write_output(args.output, _render(sentences, labels, args.format))


def cmd_features(args):
    config = _feature_config(args)
    tokens = list(args.tokens)
    if args.file:
        tokens += [line.strip() for line in _read_text(args.file).splitlines() if line.strip()]
    if not tokens:
        raise CliError("no tokens given", EXIT_USAGE)
    lines = []
    if args.header:
        lines.append("token\t" + " ".join(FEATURE_NAMES))
    for tok in tokens:
        v = compute_features(tok, config)
        lines.append(tok + "\t" + " ".join(str(int(x)) for x in v))
    _write_output(args.output, "\n".join(lines) + "\n")


# --------------------------------------------------------------- parser


def build_parser():
    parser = argparse.ArgumentParser(prog="iocner", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="skip-gram token embeddings from raw text")
    p.add_argument("corpus", nargs="+", help="raw text files, one sentence per line")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--iterations", type=int, default=15)
    p.add_argument("--negatives", type=int, default=8)
    p.add_argument("--workers", type=int, default=1,
                   help="threads; >1 is faster but not bitwise reproducible")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="train the neural tagger")
    p.add_argument("--train", required=True)
    p.add_argument("--val")
    p.add_argument("--embeddings")
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--model", required=True, help="checkpoint output path")
    p.add_argument("--history", help="per-epoch TSV log (default: <model>.history.tsv)")
    p.add_argument("--repair-bio", action="store_true",
                   help="turn a stray leading I-t into B-t instead of failing")
    p.add_argument("--no-features", action="store_true")
    p.add_argument("--tld-path")
    p.add_argument("--malware-path")
    p.add_argument("--quiet", action="store_true")
    for f in fields(TrainConfig):
        if f.name == "use_features":
            continue
        kind = int if str(f.type) == "int" else float
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind, default=None)
    p.set_defaults(func=cmd_train)

    def add_tag_io(p):
        p.add_argument("--input", help="input file ('-' for stdin)")
        p.add_argument("--text", help="inline text instead of --input")
        p.add_argument("--input-format", choices=("text", "conll"), default="text",
                       help="raw text (one sentence per line) or one token per line")
        p.add_argument("-o", "--output")
        p.add_argument("--format", choices=("conll", "spans"), default="conll")

    p = sub.add_parser("tag", help="tag text with a trained model")
    p.add_argument("--model", required=True)
    add_tag_io(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("eval", help="score predictions against gold annotations")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--token-level", action="store_true")
    p.add_argument("--format", choices=("table", "records"), default="table")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="rule-based tagging from spelling features")
    p.add_argument("--train", required=True, help="labelled corpus for the lexicon")
    add_tag_io(p)
    p.add_argument("--tld-path")
    p.add_argument("--malware-path")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("features", help="dump spelling feature vectors")
    p.add_argument("tokens", nargs="*")
    p.add_argument("--file", help="one token per line")
    p.add_argument("--tld-path")
    p.add_argument("--malware-path")
    p.add_argument("--header", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_features)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "text", None) is None and getattr(args, "input", "") is None \
            and args.command in ("tag", "baseline"):
        args.input = "-"
    try:
        args.func(args)
    except CliError as exc:
        print(f"iocner: {exc}", file=sys.stderr)
        return exc.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
