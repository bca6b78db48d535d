"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error. All outputs go to the
paths given on the command line; there is no hidden state.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import annotate as ann
from . import experiment as exp
from . import synth as synthmod
from .config import ConfigError, load_kv
from .corpus import (
    Corpus,
    CorpusError,
    corpus_stats,
    load_corpus,
    make_sentence,
    parse_conll,
    save_corpus,
    split_sentences,
    tokenize,
    write_conll,
    Sentence,
)
from .embeddings import EmbeddingError
from .evaluation import EvalError, EvalReport, align_predictions, compare, evaluate_model
from .service import ReviewSession, make_server
from .tagger import TaggerConfig, TaggerError, TaggerModel, build_context_map, train
from .tars import TarsModel, default_verbalizations, load_verbalizations, tars_predict, train_tars
from .tensor import TensorError, load_checkpoint

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

_DATA_ERRORS = (CorpusError, ConfigError, EvalError, TaggerError, EmbeddingError,
                exp.ExperimentError, TensorError, OSError, ValueError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acklab",
                                     description="Acknowledged-entity extraction laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus directory")
    p.add_argument("--out", required=True)
    p.add_argument("--sizes", default="60,20,20", help="train,dev,test sentence counts")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--templates", help="template file (default: shipped templates)")
    p.add_argument("--vocab-dir", help="directory with vocab_<TYPE>.txt files")
    p.add_argument("--proportions", help="e.g. IND=0.3,FUND=0.25,GRNB=0.2,...")

    p = sub.add_parser("corpus-stats", help="sentence/domain/entity counts")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a tagger")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.add_argument("--config", help="flat key-value config file")
    p.add_argument("--family", choices=exp.FAMILIES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int)
    p.add_argument("--log", help="training log path (default: <out>.log.ndjson)")

    p = sub.add_parser("predict", help="tag a CoNLL file with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True, help="CoNLL file or corpus directory")
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score a model or prediction file")
    p.add_argument("--model")
    p.add_argument("--predictions", help="CoNLL file with predicted tags")
    p.add_argument("--corpus", required=True, help="CoNLL file or corpus directory")
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)

    p = sub.add_parser("compare", help="comparison table from reports")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--table", help="also write an aligned plain-text table")
    p.add_argument("--plot-data", help="also write grouped-bar plot data")

    p = sub.add_parser("annotate", help="seed entity drafts for review")
    p.add_argument("--sentences", help="CoNLL file with the sentences (tags may be all O)")
    p.add_argument("--text", help="raw text file; sentences are segmented and tokenized")
    p.add_argument("--upstream", required=True, help="CoNLL with PER/LOC/ORG/MISC tags")
    p.add_argument("--grant-index", help="one grant number per line")
    p.add_argument("--org-index", help="one organization name per line")
    p.add_argument("--rules", help="rule table file (default: shipped rules)")
    p.add_argument("--out", required=True, help="drafts JSON for the review service")

    p = sub.add_parser("review-serve", help="serve the review HTTP API")
    p.add_argument("--drafts", required=True)
    p.add_argument("--log", required=True, help="append-only decision log (NDJSON)")
    p.add_argument("--bind", default="127.0.0.1:8321")
    p.add_argument("--static", help="directory with the built review UI")

    p = sub.add_parser("experiment", help="run a manifest of named runs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--base-dir", default=".")
    p.add_argument("--epochs", type=int, help="override epochs for every run")
    return parser


def run_cli(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return _dispatch(args)
    except _DATA_ERRORS as exc:
        print(f"acklab: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run_cli(sys.argv[1:]))


def _dispatch(args: argparse.Namespace) -> int:
    return {
        "synth": _cmd_synth,
        "corpus-stats": _cmd_corpus_stats,
        "train": _cmd_train,
        "predict": _cmd_predict,
        "evaluate": _cmd_evaluate,
        "compare": _cmd_compare,
        "annotate": _cmd_annotate,
        "review-serve": _cmd_review_serve,
        "experiment": _cmd_experiment,
    }[args.command](args)


def _load_split(path: str, split: str) -> list[Sentence]:
    if os.path.isdir(path):
        return load_corpus(path).split(split)
    with open(path, encoding="utf-8") as fh:
        return parse_conll(fh.read())


def _cmd_synth(args) -> int:
    sizes = tuple(int(s) for s in args.sizes.split(","))
    if len(sizes) != 3:
        raise ConfigError("--sizes must be train,dev,test")
    templates = (synthmod.parse_templates(open(args.templates, encoding="utf-8").read())
                 if args.templates else synthmod.default_templates())
    if args.vocab_dir:
        paths = {}
        for name in sorted(os.listdir(args.vocab_dir)):
            if name.startswith("vocab_") and name.endswith(".txt"):
                paths[name[len("vocab_"):-len(".txt")]] = os.path.join(args.vocab_dir, name)
        vocab = synthmod.load_vocab(paths)
    else:
        vocab = synthmod.default_vocab()
    proportions = None
    if args.proportions:
        proportions = {}
        for item in args.proportions.split(","):
            key, value = item.split("=")
            proportions[key.strip()] = float(value)
    corpus = synthmod.generate_synthetic(templates, vocab, sizes, args.seed,
                                         proportions=proportions)
    save_corpus(corpus, args.out)
    stats = corpus_stats(corpus)
    print(f"wrote {stats['total_sentences']} sentences to {args.out}")
    return EXIT_OK


def _cmd_corpus_stats(args) -> int:
    corpus = load_corpus(args.corpus)
    stats = corpus_stats(corpus)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=1, sort_keys=True)
        fh.write("\n")
    splits = stats["splits"]
    print(" ".join(f"{name}={splits[name]['sentences']}" for name in Corpus.SPLITS),
          f"total={stats['total_sentences']}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = load_kv(args.config) if args.config else {}
    family = args.family or str(cfg.get("model.family", "flair-stack"))
    if family not in exp.FAMILIES:
        raise ConfigError(f"unknown model family {family!r}")
    corpus = load_corpus(args.corpus)
    overrides = {k[len("optimizer."):]: v for k, v in cfg.items() if k.startswith("optimizer.")}
    opt_cfg = exp.optimizer_for(family, overrides)
    epochs = args.epochs if args.epochs is not None else int(cfg.get("epochs", 20))
    run = exp.RunSpec(name="cli", family=family, corpus=args.corpus, seed=args.seed,
                      epochs=epochs, options=cfg)
    corpus.scheme = str(cfg.get("corpus.scheme", corpus.scheme))
    if family == "flair-stack":
        stack = exp.build_stack(corpus, cfg)
        model, log_entries = train(
            TaggerConfig(family="flair-stack", scheme=corpus.scheme,
                         hidden_size=int(cfg.get("model.hidden_size", 32))),
            corpus, opt_cfg, args.seed, epochs=epochs, stack=stack)
    elif family == "mini-transformer-finetune":
        model, log_entries = train(exp._finetune_config(run, corpus), corpus, opt_cfg,
                                   args.seed, epochs=epochs)
    else:
        verb_path = cfg.get("tars.verbalization_path")
        verbalization = load_verbalizations(str(verb_path)) if verb_path else default_verbalizations()
        from .tars import TarsConfig
        model, log_entries = train_tars(
            corpus, verbalization,
            TarsConfig(model_dim=int(cfg.get("tars.model_dim", 48))),
            opt_cfg, args.seed, epochs=epochs)
    model.save(args.out)
    log_path = args.log or f"{args.out}.log.ndjson"
    with open(log_path, "w", encoding="utf-8") as fh:
        for entry in log_entries:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    final = log_entries[-1] if log_entries else {}
    print(f"saved {family} model to {args.out}"
          + (f" (dev_f1={final.get('dev_f1', 0):.3f})" if final else ""))
    return EXIT_OK


def _load_model(path: str):
    kind = load_checkpoint(path).kind
    if kind == "tars":
        return TarsModel.load(path)
    return TaggerModel.load(path)


def _predictor_for(model, sentences):
    if isinstance(model, TarsModel):
        candidates = list(model.verbalization.items())
        return exp._TarsPredictor(model, candidates), None
    context_map = None
    if model.config.family == "finetune" and model.config.context_window > 0:
        context_map = build_context_map(sentences, model.config.context_window)
    return model, context_map


def _cmd_predict(args) -> int:
    model = _load_model(args.model)
    sentences = _load_split(args.corpus, args.split)
    predictor, context_map = _predictor_for(model, sentences)
    tagged = []
    for sent in sentences:
        ctx = (context_map or {}).get(sent.sent_id)
        result = predictor.predict(sent, ctx) if ctx is not None else predictor.predict(sent)
        spans = result.spans if hasattr(result, "spans") else list(result)
        tagged.append(Sentence(sent.tokens, sorted(spans), dict(sent.meta)))
    scheme = getattr(model, "config", None)
    scheme = scheme.scheme if scheme is not None and hasattr(scheme, "scheme") else "BIOES"
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(write_conll(tagged, scheme))
    print(f"wrote predictions for {len(tagged)} sentences to {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    sentences = _load_split(args.corpus, args.split)
    if args.predictions:
        with open(args.predictions, encoding="utf-8") as fh:
            preds = align_predictions(sentences, parse_conll(fh.read()))
        report = evaluate_model(preds, sentences, meta={"predictions": args.predictions})
    elif args.model:
        model = _load_model(args.model)
        predictor, context_map = _predictor_for(model, sentences)
        report = evaluate_model(predictor, sentences, context_map=context_map,
                                meta={"model": args.model, "corpus": args.corpus,
                                      "split": args.split})
    else:
        raise ConfigError("evaluate needs --model or --predictions")
    report.save(args.out)
    print(f"micro_f1={report.micro_f1:.4f} -> {args.out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    reports = [EvalReport.load(path) for path in args.reports]
    comparison = compare(reports)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(comparison.to_json())
    if args.table:
        with open(args.table, "w", encoding="utf-8") as fh:
            fh.write(comparison.to_text())
    if args.plot_data:
        with open(args.plot_data, "w", encoding="utf-8") as fh:
            json.dump(comparison.plot_data(), fh, indent=1, sort_keys=True)
            fh.write("\n")
    print(comparison.to_text(), end="")
    return EXIT_OK


def _read_lines(path: str | None) -> list[str]:
    if not path:
        return []
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def _cmd_annotate(args) -> int:
    if bool(args.sentences) == bool(args.text):
        raise ConfigError("annotate needs exactly one of --sentences or --text")
    if args.sentences:
        with open(args.sentences, encoding="utf-8") as fh:
            sentences = parse_conll(fh.read())
    else:
        with open(args.text, encoding="utf-8") as fh:
            raw = fh.read()
        sentences = [make_sentence([t.text for t in tokenize(piece)])
                     for piece in split_sentences(raw)]
    for i, sent in enumerate(sentences):
        sent.meta.setdefault("sent_id", f"doc-{i:05d}")
    with open(args.upstream, encoding="utf-8") as fh:
        upstream = parse_conll(fh.read())
    rules = ann.RuleTable.load(args.rules) if args.rules else ann.RuleTable.default_table()
    drafts = ann.seed_annotations(sentences, upstream, _read_lines(args.grant_index),
                                  _read_lines(args.org_index), rules)
    ann.save_drafts(drafts, args.out)
    n_drafts = sum(len(doc.drafts) for doc in drafts.documents)
    print(f"wrote {n_drafts} drafts over {len(drafts.documents)} documents to {args.out}"
          + (f" ({len(drafts.conflicts)} conflicts logged)" if drafts.conflicts else ""))
    return EXIT_OK


def _cmd_review_serve(args) -> int:
    host, _, port = args.bind.rpartition(":")
    drafts = ann.load_drafts(args.drafts)
    session = ReviewSession(drafts, args.log)
    server = make_server(session, host or "127.0.0.1", int(port), static_dir=args.static)
    print(f"review service on http://{host or '127.0.0.1'}:{port} "
          f"({len(drafts.documents)} documents; log: {args.log})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        session.close()
    return EXIT_OK


def _cmd_experiment(args) -> int:
    manifest = exp.load_manifest(args.manifest)
    result = exp.run_experiment(manifest, args.out, base_dir=args.base_dir,
                                epochs_override=args.epochs)
    for report in result.reports:
        print(f"{report.meta['run']}: micro_f1={report.micro_f1:.4f}")
    for name, error in sorted(result.errors.items()):
        print(f"{name}: FAILED ({error})", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_DATA


if __name__ == "__main__":
    main()
