"""Command-line entry point: ``somfsvm <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pipeline
from .data import FEATURE_NAMES, build_features, parse_feature_csv, parse_price_csv
from .errors import (
    ContractError,
    DataError,
    ModelFileError,
    ParameterError,
    TrainingError,
)
from .evaluation import CSV_HEADER

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3

log = logging.getLogger("somfsvm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None


def _is_feature_csv(raw: bytes) -> bool:
    head = raw.decode("utf-8-sig", errors="replace").split("\n", 1)[0]
    cols = {c.strip() for c in head.split(",")}
    return set(FEATURE_NAMES) <= cols


def _emit(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _config(path):
    if path is None:
        return pipeline.PipelineConfig()
    try:
        return pipeline.load_config(path)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None


def cmd_features(args):
    series = parse_price_csv(_read_bytes(args.prices))
    _emit(build_features(series).to_csv(), args.output)


def cmd_train(args):
    config = _config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    raw = _read_bytes(args.input)
    if _is_feature_csv(raw):
        # a feature file is taken to be the training set as-is
        model = pipeline.fit_two_stage(parse_feature_csv(raw), config, args.workers)
    else:
        model = pipeline.train_two_stage(parse_price_csv(raw), config, args.workers)
    pipeline.save_model(model, args.output)
    sizes = ", ".join(f"{k}:{rs.n_rules}" for k, rs in sorted(model.rulesets.items()))
    log.info("saved %s (rules per cluster %s)", args.output, sizes)


def _inputs(raw, model):
    """Feature rows, or the held-out test split when given raw prices."""
    if _is_feature_csv(raw):
        return parse_feature_csv(raw)
    _, test = pipeline.prepare(parse_price_csv(raw), model.config)
    return test


def cmd_predict(args):
    if not args.row and not args.input:
        raise UsageError("predict needs an input CSV or at least one --row")
    if args.row:
        try:
            X = np.array([[float(v) for v in r.split(",")] for r in args.row])
        except ValueError as exc:
            raise UsageError(f"--row expects comma-separated numbers: {exc}") from None
    model = pipeline.load_model(args.model)
    if args.row:
        labels = [str(i) for i in range(len(X))]
        header = "row,prediction"
    else:
        ds = _inputs(_read_bytes(args.input), model)
        X, labels = ds.X, [d.isoformat() for d in ds.dates]
        header = "date,prediction"
    preds = pipeline.predict_many(model, X)
    lines = [header] + [f"{a},{p!r}" for a, p in zip(labels, preds.tolist())]
    _emit("\n".join(lines) + "\n", args.output)


def cmd_evaluate(args):
    model = pipeline.load_model(args.model)
    test = _inputs(_read_bytes(args.test), model)
    rep = pipeline.evaluate(model, test)
    _emit(CSV_HEADER + "\n" + rep.csv_row(args.stock, args.model_name) + "\n", args.output)


def cmd_export_rules(args):
    _emit(pipeline.export_model_rules(pipeline.load_model(args.model)), args.output)


def _manifest(path):
    try:
        doc = json.loads(_read_bytes(path).decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise UsageError(f"manifest is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("datasets"), list):
        raise UsageError('manifest must be an object with a "datasets" list')
    unknown = set(doc) - {"datasets", "config"}
    if unknown:
        raise UsageError(f"unknown manifest keys: {sorted(unknown)}")
    base = Path(path).parent
    entries = []
    for item in doc["datasets"]:
        if not isinstance(item, dict) or set(item) != {"name", "path"}:
            raise UsageError('each dataset needs exactly "name" and "path"')
        entries.append((str(item["name"]), base / item["path"]))
    return entries, doc.get("config")


def cmd_experiment(args):
    entries, inline = _manifest(args.manifest)
    if args.config is not None:
        config = _config(args.config)
    else:
        config = pipeline.config_from_dict(inline or {})
    datasets, failed = [], []
    for name, path in entries:
        try:
            datasets.append((name, parse_price_csv(_read_bytes(path))))
        except DataError as exc:
            log.warning("dataset %s unreadable: %s", name, exc)
            failed.append((name, exc))
    report = pipeline.run_experiment(datasets, config, args.workers)
    # unreadable files still get a row, in manifest order
    errors = {name: pipeline.ExperimentRow(name, error=f"{type(e).__name__}: {e}") for name, e in failed}
    done = {r.stock: r for r in report.rows}
    report.rows = [done.get(n) or errors[n] for n, _ in entries]
    report.write(args.output)
    sys.stdout.write(report.to_csv())


def build_parser():
    p = _Parser(prog="somfsvm", description="SOM + fuzzy-SVM price forecasting")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("features", help="price CSV -> feature CSV")
    s.add_argument("prices")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", help="price or feature CSV -> model file")
    s.add_argument("input")
    s.add_argument("-c", "--config")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("-j", "--workers", type=int, default=1)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="model + feature rows -> predictions CSV")
    s.add_argument("model")
    s.add_argument("input", nargs="?")
    s.add_argument("--row", action="append", help="x1,...,x5 (repeatable)")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="model + test CSV -> metric row")
    s.add_argument("model")
    s.add_argument("test")
    s.add_argument("--stock", default="series")
    s.add_argument("--model-name", default="SOM+f-SVM")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("export-rules", help="model -> rule listing")
    s.add_argument("model")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_export_rules)

    s = sub.add_parser("experiment", help="dataset manifest -> report directory")
    s.add_argument("manifest")
    s.add_argument("-c", "--config")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("-j", "--workers", type=int, default=1)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(message)s",
        )
        args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelFileError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, ContractError) as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
