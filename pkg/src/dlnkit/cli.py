"""Command-line entry point: ``python -m dlnkit <command> ...``.

Each command prints one JSON document on stdout and a short summary on
stderr, and writes ``<output>.manifest.json`` next to its main output.

Exit codes: 0 ok, 1 internal error, 2 parse/format error, 3 I/O error,
4 configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import compile_model, count_ops, evaluate, export_graph, export_text
from .data import (
    DataFormatError, EmptyDatasetError, InsufficientLengthError, LabelError, SchemaError,
    balanced_accuracy, extract_basic_features, load_feature_csv, load_sequences, preprocess,
    fit_preprocessor, save_feature_csv,
)
from .hpo import SearchSpace, config_stats, run_search, write_history
from .network import (
    ConfigError, ModelFormatError, TrainConfig, build, format_config, hard_predict, load,
    parse_config, save, train,
)

EXIT_OK, EXIT_INTERNAL, EXIT_PARSE, EXIT_IO, EXIT_CONFIG = 0, 1, 2, 3, 4

PARSE_ERRORS = (DataFormatError, EmptyDatasetError, InsufficientLengthError, LabelError,
                SchemaError, ModelFormatError, json.JSONDecodeError)


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _emit(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True))


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _write(path, data) -> None:
    mode = "wb" if isinstance(data, bytes) else "w"
    kwargs = {} if isinstance(data, bytes) else {"encoding": "utf-8"}
    try:
        with open(path, mode, **kwargs) as fh:
            fh.write(data)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_IO) from None


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from None


def _manifest(args, inputs, outputs, started):
    doc = {
        "command": args.command,
        "argv": args.argv,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": getattr(args, "seed", None),
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "version": __version__,
    }
    _write(str(outputs[0]) + ".manifest.json", json.dumps(doc, indent=2) + "\n")


def _load_config(args) -> TrainConfig:
    base = TrainConfig()
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot read {args.config}: {exc.strerror}", EXIT_IO) from None
        base = parse_config(text)
    d = base.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        d["epochs"] = args.epochs
    return TrainConfig.from_dict(d).validate()


def _model_predict(model, csv_path):
    fm = load_feature_csv(csv_path, classes=model.feature_meta.classes)
    pre = model.feature_meta.preprocessor
    if pre is not None:
        fm = pre.transform(fm)
    pred, _ = hard_predict(model, fm)
    return fm, pred


# --------------------------------------------------------------------------
# commands


def cmd_extract(args):
    ds = load_sequences(args.input, format=args.format)
    fm = extract_basic_features(ds)
    _writable(args.out)
    save_feature_csv(fm, args.out)
    _emit({"command": "extract", "samples": len(ds), "features": len(fm.columns),
           "out": str(args.out)})
    return [args.input], [args.out]


def _writable(path) -> bool:
    try:
        with open(path, "a", encoding="utf-8"):
            pass
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_IO) from None
    return True


def cmd_preprocess(args):
    train_fm = load_feature_csv(args.train)
    test_fm = load_feature_csv(args.test, classes=train_fm.classes)
    tr, te = preprocess(train_fm, test_fm, args.categorical_max_unique)
    outs = [f"{args.out}.train.csv", f"{args.out}.test.csv", f"{args.out}.preprocessor.json"]
    for path, fm in zip(outs, (tr, te)):
        _writable(path)
        save_feature_csv(fm, path)
    _write(outs[2], json.dumps(tr.scaling.to_dict(), indent=2, sort_keys=True) + "\n")
    _emit({"command": "preprocess", "train_rows": len(tr.labels), "test_rows": len(te.labels),
           "columns": tr.names})
    return [args.train, args.test], outs


def cmd_hpo(args):
    raw = load_feature_csv(args.train)
    pre, rows = fit_preprocessor(raw, None, args.categorical_max_unique)
    data = pre.transform(raw.subset(rows))
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = (args.epochs,)
    space = SearchSpace.for_data(data, **overrides)
    best, records = run_search(space, data, args.trials, args.seed, folds=args.folds,
                               workers=args.workers)
    outs = [f"{args.out}.best.cfg", f"{args.out}.history.jsonl"]
    _write(outs[0], format_config(best))
    _writable(outs[1])
    write_history(records, outs[1])
    stats = config_stats([best])
    _note(stats.render())
    winner = next(r for r in records if r.config == best)
    _emit({"command": "hpo", "trials": len(records), "best_cv_score": winner.cv_score,
           "best_trial": winner.trial, "best_config": best.to_dict(),
           "failed_trials": sum(r.error is not None for r in records)})
    return [args.train], outs


def cmd_train(args):
    config = _load_config(args)
    train_raw = load_feature_csv(args.train)
    test_raw = load_feature_csv(args.test, classes=train_raw.classes)
    tr, te = preprocess(train_raw, test_raw, args.categorical_max_unique)
    model = train(build(config, tr), tr)
    payload = save(model)
    _write(args.out, payload)
    circuit = compile_model(model)
    cost = count_ops(circuit)
    train_fm = tr.scaling.transform(train_raw)
    train_pred, _ = hard_predict(model, train_fm)
    test_pred, _ = hard_predict(model, te)
    doc = {
        "command": "train",
        "train_balanced_accuracy": balanced_accuracy(train_fm.labels, train_pred),
        "test_balanced_accuracy": balanced_accuracy(te.labels, test_pred),
        "total_ops": cost.total_ops,
        "cost": cost.to_dict(),
        "final_loss": model.history[-1]["loss"] if model.history else None,
        "epochs": config.epochs,
        "model": str(args.out),
    }
    _emit(doc)
    _note(f"train BA {doc['train_balanced_accuracy']:.4f}  test BA "
          f"{doc['test_balanced_accuracy']:.4f}  OPs {cost.total_ops}")
    return [args.train, args.test] + ([args.config] if args.config else []), [args.out]


def _load_model(path):
    return load(_read_bytes(path))


def cmd_eval(args):
    model = _load_model(args.model)
    fm, pred = _model_predict(model, args.test)
    circuit = compile_model(model)
    cpred, _ = evaluate(circuit, fm.values)
    _emit({"command": "eval", "balanced_accuracy": balanced_accuracy(fm.labels, pred),
           "circuit_balanced_accuracy": balanced_accuracy(fm.labels, cpred),
           "samples": len(fm.labels)})
    return [args.model, args.test], None


def cmd_compile(args):
    model = _load_model(args.model)
    circuit = compile_model(model)
    cost = count_ops(circuit)
    outs = [f"{args.out}.rules.txt", f"{args.out}.dot", f"{args.out}.cost.json"]
    _write(outs[0], export_text(circuit))
    _write(outs[1], export_graph(circuit))
    _write(outs[2], cost.to_json())
    _emit({"command": "compile", "total_ops": cost.total_ops, "cost": cost.to_dict(),
           "outputs": outs})
    return [args.model], outs


def cmd_export(args):
    model = _load_model(args.model)
    circuit = compile_model(model)
    if args.format == "text":
        body = export_text(circuit)
    elif args.format == "dot":
        body = export_graph(circuit)
    else:
        body = json.dumps(circuit.to_dict(), indent=2, sort_keys=True) + "\n"
    _write(args.out, body)
    _emit({"command": "export", "format": args.format, "out": str(args.out)})
    return [args.model], [args.out]


def cmd_rerun(args):
    try:
        doc = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read {args.manifest}: {exc.strerror}", EXIT_IO) from None
    return main(doc["argv"])


COMMANDS = {
    "extract": cmd_extract, "preprocess": cmd_preprocess, "hpo": cmd_hpo, "train": cmd_train,
    "eval": cmd_eval, "compile": cmd_compile, "export": cmd_export, "rerun": cmd_rerun,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dlnkit", description="Differentiable logic network toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("extract", help="sequence file -> 14-column feature CSV")
    s.add_argument("--input", "--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=["auto", "tsv-label-first", "delimited"], default="auto")

    def data_opts(s):
        s.add_argument("--categorical-max-unique", type=int, default=10)

    s = sub.add_parser("preprocess", help="clean, one-hot and scale train/test CSVs")
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--out", required=True, help="output prefix")
    data_opts(s)

    s = sub.add_parser("hpo", help="random search with cross-validation on the training CSV")
    s.add_argument("--train", required=True)
    s.add_argument("--trials", type=int, default=128)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--folds", type=int, default=None)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--out", required=True, help="output prefix")
    data_opts(s)

    s = sub.add_parser("train", help="preprocess, build, train, save model, report metrics")
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--config", default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--out", required=True, help="model file")
    data_opts(s)

    s = sub.add_parser("eval", help="balanced accuracy of a saved model on a raw CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--test", required=True)

    s = sub.add_parser("compile", help="rules text, DOT graph and cost report")
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True, help="output prefix")

    s = sub.add_parser("export", help="compiled circuit in one format")
    s.add_argument("--model", required=True)
    s.add_argument("--format", choices=["text", "dot", "json"], default="text")
    s.add_argument("--out", required=True)

    s = sub.add_parser("rerun", help="repeat the command recorded in a manifest")
    s.add_argument("manifest")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    args.argv = argv
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    try:
        result = COMMANDS[args.command](args)
        if isinstance(result, int):
            return result
        inputs, outputs = result
        if outputs:
            _manifest(args, inputs, outputs, started)
        return EXIT_OK
    except CliError as exc:
        _note(f"error: {exc}")
        return exc.code
    except ConfigError as exc:
        _note(f"config error: {exc}")
        return EXIT_CONFIG
    except PARSE_ERRORS as exc:
        _note(f"parse error: {exc}")
        return EXIT_PARSE
    except OSError as exc:
        _note(f"I/O error: {exc}")
        return EXIT_IO
    except Exception as exc:  # anything else is a bug
        _note(f"internal error: {type(exc).__name__}: {exc}")
        return EXIT_INTERNAL
