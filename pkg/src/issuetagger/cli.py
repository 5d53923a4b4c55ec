"""Command-line entry point.

Exit codes: 0 success, 1 invalid flags or data, 2 runtime / I/O failure.
Secrets (webhook secret, app key) are read from the environment only.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import CANONICAL_LABELS, __version__

DEFAULT_SEED = 42

log = logging.getLogger("issuetagger")


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # bad or unknown flags are validation errors
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser, min_count_default: int) -> None:
    g = p.add_argument_group("model configuration")
    g.add_argument("--preset", choices=("default", "compact"), default="default",
                   help="compact: no character n-grams, min-count 14 (small model files)")
    g.add_argument("--dim", type=int, help="embedding width (default 100)")
    g.add_argument("--epochs", type=int, help="training epochs (default 5)")
    g.add_argument("--lr", type=float, help="initial learning rate (default 0.1)")
    g.add_argument("--min-count", type=int, default=min_count_default,
                   help=f"minimum word frequency (default {min_count_default})")
    g.add_argument("--word-ngrams", type=int, help="max word n-gram length (default 1)")
    g.add_argument("--minn", type=int, help="min character n-gram length (default 3)")
    g.add_argument("--maxn", type=int, help="max character n-gram length, 0 disables (default 6)")
    g.add_argument("--bucket", type=int, help="hashing buckets (default 2000000)")
    g.add_argument("--loss", choices=("flat_softmax", "hierarchical_softmax"), help="output layer")
    g.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"random seed (default {DEFAULT_SEED})")


def _config(args: argparse.Namespace):
    from .classifier import TrainConfig

    overrides = {
        "dim": args.dim, "epochs": args.epochs, "learning_rate": args.lr,
        "min_count": args.min_count, "word_ngrams": args.word_ngrams,
        "char_ngram_min": args.minn, "char_ngram_max": args.maxn,
        "hashing_buckets": args.bucket, "loss_mode": args.loss, "seed": args.seed,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    try:
        if args.preset == "compact":
            return TrainConfig.compact(**overrides)
        return TrainConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise CLIError(1, f"invalid configuration: {exc}") from exc


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CLIError(1, f"input file not found: {p}")
    return p


def _load_dataset(path: str):
    from .dataset import DatasetError, load_csv

    p = _require_file(path)
    try:
        return load_csv(p)
    except DatasetError as exc:
        raise CLIError(1, f"{p}: {exc}") from exc
    except (OSError, UnicodeDecodeError) as exc:
        raise CLIError(2, f"{p}: {exc}") from exc


def _training_corpus(path: str, fmt: str) -> tuple[list, tuple[str, ...] | None]:
    from .dataset import DatasetError, read_fasttext, training_pairs
    from .text import tokenize

    p = _require_file(path)
    if fmt == "auto":
        fmt = "csv" if p.suffix.lower() == ".csv" else "fasttext"
    if fmt == "csv":
        dataset = _load_dataset(path)
        try:
            pairs = training_pairs(dataset)
        except DatasetError as exc:
            raise CLIError(1, f"{p}: {exc}") from exc
        counts = dataset.class_counts()
        return pairs, tuple(lab for lab in CANONICAL_LABELS if counts[lab] > 0)
    try:
        rows = read_fasttext(p)
    except DatasetError as exc:
        raise CLIError(1, f"{p}: {exc}") from exc
    return [(tokenize(text), label) for label, text in rows], None


def cmd_train(args: argparse.Namespace) -> int:
    from .classifier import TrainingError, fingerprint, loss, save, train

    config = _config(args)
    corpus, labels = _training_corpus(args.input, args.format)
    try:
        model = train(corpus, config, labels=labels)
    except TrainingError as exc:
        raise CLIError(1, f"training failed: {exc}") from exc
    final = loss([(model.featurize(t), model.label_index(lab)) for t, lab in corpus], model)
    try:
        size = save(model, args.output)
    except OSError as exc:
        raise CLIError(2, f"cannot write model: {exc}") from exc
    print(f"model: {args.output}")
    print(f"labels: {', '.join(model.labels)}")
    print(f"documents: {len(corpus)}")
    print(f"final training loss: {final:.6f}")
    print(f"vocabulary size: {len(model.vocab)} (min_count={config.min_count})")
    print(f"model file size: {size} bytes")
    print(f"config: {config.to_json()}")
    print(f"config fingerprint: {config.fingerprint()}")
    print(f"model fingerprint: {fingerprint(model)}")
    return 0


def _load_model(path: str):
    from .classifier import ModelFormatError, load

    try:
        return load(path)
    except (OSError, ModelFormatError) as exc:
        raise CLIError(2, f"cannot load model {path}: {exc}") from exc


def cmd_predict(args: argparse.Namespace) -> int:
    from .classifier import predict_text

    model = _load_model(args.model)
    if args.file is not None:
        p = _require_file(args.file)
        texts = p.read_text(encoding="utf-8").splitlines()
    else:
        texts = args.text
    for text in texts:
        pred = predict_text(text, model)
        scores = " ".join(f"{lab}={p:.6f}" for lab, p in pred.scores.items())
        print(f"{pred.argmax_label}\t{scores}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    from .evaluation import (
        FoldError,
        compare_reports,
        cross_validate,
        evaluate_holdout,
        format_deltas,
        format_report,
        read_report,
    )

    if args.protocol == "holdout" and not args.test:
        raise CLIError(1, "--protocol holdout requires --test")
    if args.protocol == "cv" and args.test:
        raise CLIError(1, "--test is only valid with --protocol holdout")
    if args.k < 2:
        raise CLIError(1, "--k must be >= 2")
    config = _config(args)
    train_set = _load_dataset(args.train)
    try:
        if args.protocol == "cv":
            report = cross_validate(train_set, args.k, config, args.seed, args.averaging, args.jobs)
        else:
            report = evaluate_holdout(train_set, _load_dataset(args.test), config)
    except FoldError as exc:
        raise CLIError(2, f"evaluation failed in {exc}") from exc
    except ValueError as exc:
        raise CLIError(1, f"evaluation failed: {exc}") from exc
    print(format_report(report))
    if args.report:
        try:
            json_path, txt_path = report.write(args.report)
        except OSError as exc:
            raise CLIError(2, f"cannot write report: {exc}") from exc
        print(f"report: {json_path} ({txt_path})")
    if args.compare_to:
        baseline = read_report(_require_file(args.compare_to))
        print(format_deltas(compare_reports(baseline, report), name=args.protocol))
    return 0


def cmd_dataset(args: argparse.Namespace) -> int:
    from .dataset import (
        DatasetError,
        balance,
        export_fasttext,
        export_tfidf,
        save_csv,
        stratified_kfold,
        write_folds,
    )

    dataset = _load_dataset(args.input)
    try:
        if args.action == "balance":
            out = balance(dataset, args.per_class, args.seed)
            save_csv(out, args.output)
            print(f"wrote {len(out)} issues to {args.output}: {out.class_counts()}")
        elif args.action == "kfold":
            plan = stratified_kfold(dataset, args.k, args.seed)
            write_folds(plan, args.output)
            sizes = [len(f) for f in plan.folds()]
            print(f"wrote {args.k}-fold assignment for {len(plan.assignment)} issues to {args.output}: {sizes}")
        elif args.action == "export-tfidf":
            summary = export_tfidf(dataset, args.output)
            print(json.dumps(summary, sort_keys=True))
        elif args.action == "export-fasttext":
            n = export_fasttext(dataset, args.output)
            print(f"wrote {n} lines to {args.output}")
        elif args.action == "treatment":
            from .confounds import TreatmentSpec, build_treatment

            kind = {"code_snippet": "code_snippet_presence", "language": "consistent_language"}.get(
                args.kind, args.kind)
            treatment, baseline = build_treatment(dataset, TreatmentSpec(kind, args.size, args.seed, args.language))
            prefix = Path(args.output_prefix)
            t_path = prefix.with_name(prefix.name + ".treatment.csv")
            b_path = prefix.with_name(prefix.name + ".baseline.csv")
            save_csv(treatment, t_path)
            save_csv(baseline, b_path)
            print(f"treatment ({kind}): {len(treatment)} issues -> {t_path}")
            print(f"baseline: {len(baseline)} issues -> {b_path}")
    except (DatasetError, ValueError) as exc:
        raise CLIError(1, str(exc)) from exc
    except OSError as exc:
        raise CLIError(2, str(exc)) from exc
    return 0


def cmd_confounds(args: argparse.Namespace) -> int:
    from .confounds import build_profile, default_profiles, detect_code_snippet, detect_language, write_profile
    from .confounds.language import parse_corpus, read_profile

    if args.action == "build-profile":
        corpus = parse_corpus(_require_file(args.corpus).read_text(encoding="utf-8"))
        profile = build_profile(corpus.language_tag, corpus.script, corpus.train,
                                f"{Path(args.corpus).name} ({corpus.source})")
        write_profile(profile, args.output)
        print(f"{profile.language_tag}: {len(profile.trigram_ranks)} trigrams -> {args.output}")
        return 0
    if args.file is not None:
        texts = [_require_file(args.file).read_text(encoding="utf-8")]
        if args.action == "detect-language":
            texts = [t for t in texts[0].splitlines()]
    else:
        texts = args.text or []
    if args.action == "detect-language":
        profiles = [read_profile(p) for p in args.profile] if args.profile else default_profiles()
        for text in texts:
            tag, confidence = detect_language(text, profiles)
            print(f"{tag}\t{confidence:.4f}")
    else:
        for text in texts:
            print("true" if detect_code_snippet(text) else "false")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import os

    from .classifier import ModelFormatError
    from .webhook import ServiceSettings, WebhookService, serve

    env = dict(os.environ)
    if args.model:
        env["ISSUETAGGER_MODEL_PATH"] = args.model
    if args.port is not None:
        env["ISSUETAGGER_PORT"] = str(args.port)
    if args.host:
        env["ISSUETAGGER_HOST"] = args.host
    try:
        settings = ServiceSettings.from_env(env)
        api = settings.platform_client()
    except (ValueError, OSError) as exc:
        raise CLIError(1, str(exc)) from exc
    try:
        service = WebhookService.from_settings(settings, api)
    except (OSError, ModelFormatError, ValueError) as exc:
        raise CLIError(2, f"cannot load model: {exc}") from exc
    try:
        serve(service, settings.host, settings.port)
    except OSError as exc:
        raise CLIError(2, f"cannot listen on {settings.host}:{settings.port}: {exc}") from exc
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="issuetagger", description="Issue-type classification: bug / enhancement / question.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train", help="train and save a model")
    p.add_argument("--input", required=True, help="training data (CSV id,label,title,body or fastText lines)")
    p.add_argument("--format", choices=("auto", "csv", "fasttext"), default="auto",
                   help="input format (auto: .csv is CSV, anything else fastText)")
    p.add_argument("--output", required=True, help="model file to write")
    _add_config_flags(p, min_count_default=14)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="classify texts with a saved model")
    p.add_argument("--model", required=True, help="model file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--text", action="append", help="text to classify (repeatable)")
    src.add_argument("--file", help="file with one text per line")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="cross-validation or train/test evaluation")
    p.add_argument("--protocol", choices=("cv", "holdout"), default="cv")
    p.add_argument("--train", required=True, help="dataset CSV (the CV pool, or the training set)")
    p.add_argument("--test", help="test dataset CSV (holdout only)")
    p.add_argument("--k", type=int, default=10, help="number of folds (default 10)")
    p.add_argument("--averaging", choices=("pooled", "per_fold"), default="pooled",
                   help="pool out-of-fold predictions or average per-fold metrics")
    p.add_argument("--jobs", type=int, default=1, help="parallel fold workers")
    p.add_argument("--report", help="write the JSON report here (plus a .txt table)")
    p.add_argument("--compare-to", help="baseline report JSON; prints per-class metric deltas")
    # evaluation runs without the disk-saving vocabulary threshold
    _add_config_flags(p, min_count_default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("dataset", help="dataset construction and export")
    dsub = p.add_subparsers(dest="action", required=True, metavar="ACTION")
    d = dsub.add_parser("balance", help="sample the same number of issues per class")
    d.add_argument("--input", required=True)
    d.add_argument("--output", required=True)
    d.add_argument("--per-class", type=int, required=True)
    d.add_argument("--seed", type=int, default=DEFAULT_SEED)
    d = dsub.add_parser("kfold", help="write a stratified fold assignment (id,fold)")
    d.add_argument("--input", required=True)
    d.add_argument("--output", required=True)
    d.add_argument("--k", type=int, default=10)
    d.add_argument("--seed", type=int, default=DEFAULT_SEED)
    d = dsub.add_parser("export-tfidf", help="tf-idf document-term matrix plus .vocab sidecar")
    d.add_argument("--input", required=True)
    d.add_argument("--output", required=True)
    d = dsub.add_parser("export-fasttext", help="__label__<name> <text> lines")
    d.add_argument("--input", required=True)
    d.add_argument("--output", required=True)
    d = dsub.add_parser("treatment", help="treatment and random-baseline arms as two CSVs")
    d.add_argument("--input", required=True)
    d.add_argument("--kind", required=True,
                   choices=("consistent_language", "code_snippet_presence", "language", "code_snippet"))
    d.add_argument("--size", type=int, required=True)
    d.add_argument("--seed", type=int, default=DEFAULT_SEED)
    d.add_argument("--language", default="eng", help="language tag for consistent_language (default eng)")
    d.add_argument("--output-prefix", required=True,
                   help="writes <prefix>.treatment.csv and <prefix>.baseline.csv")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("confounds", help="language and code snippet detectors")
    csub = p.add_subparsers(dest="action", required=True, metavar="ACTION")
    c = csub.add_parser("detect-language", help="print <tag>\\t<confidence> per text")
    g = c.add_mutually_exclusive_group(required=True)
    g.add_argument("--text", action="append")
    g.add_argument("--file", help="one text per line")
    c.add_argument("--profile", action="append", help="profile file (repeatable; default: bundled)")
    c = csub.add_parser("detect-snippet", help="print true/false: fenced code block present")
    g = c.add_mutually_exclusive_group(required=True)
    g.add_argument("--text", action="append")
    g.add_argument("--file", help="a markdown body")
    c = csub.add_parser("build-profile", help="build a trigram profile from a corpus file")
    c.add_argument("--corpus", required=True)
    c.add_argument("--output", required=True)
    p.set_defaults(func=cmd_confounds)

    p = sub.add_parser("serve", help="run the labeling webhook (secrets from ISSUETAGGER_* env vars)")
    p.add_argument("--model", help="model file (overrides ISSUETAGGER_MODEL_PATH)")
    p.add_argument("--port", type=int, help="listen port (overrides ISSUETAGGER_PORT, default 8080)")
    p.add_argument("--host", help="listen address (overrides ISSUETAGGER_HOST, default 0.0.0.0)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
