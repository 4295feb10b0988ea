"""Command-line entry point: one binary, subcommands for every flow."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .calibration import ModulatingFactor, factor_value
from .classifier import load_params, save_params
from .metrics import evaluate
from .pipeline import (
    DEFAULT_K_GRID,
    DEFAULT_LAMBDA_GRID,
    DEFAULT_TAU_GRID,
    MODES,
    RunConfig,
    predict_batch,
    pseudo_label,
    save_pseudo_labels,
    save_training_log,
    sweep,
    train_calibrated,
)
from .store import (
    DataError,
    build_store,
    load_embeddings,
    load_store,
    save_store,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _shared_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("--metric", choices=("euclidean", "cosine"), default="euclidean")
    parser.add_argument("--k", type=int, default=16)
    parser.add_argument("--tau", type=float, default=1.0)
    parser.add_argument("--lambda", dest="lam", type=float, default=0.5)
    parser.add_argument("--factor", choices=("focal", "nll"), default="focal")
    parser.add_argument("--gamma", type=float, default=2.0)
    parser.add_argument("--alpha", type=float, default=1.0)
    parser.add_argument("--mode", choices=MODES, default="union-all")


def _build_parser() -> _Parser:
    parser = _Parser(prog="knn-calibrate")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-store", help="ingest embeddings and write a .femb store")
    _shared_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("tsv", "binary"), default="tsv")
    p.add_argument("--output", required=True)

    p = sub.add_parser("knn-eval", help="evaluate the lazy learner alone")
    _shared_flags(p)
    p.add_argument("--store", required=True)
    p.add_argument("--queries", required=True, help="labeled .femb store of queries")

    p = sub.add_parser("train", help="train the classifier, optionally calibrated")
    _shared_flags(p)
    p.add_argument("--train", required=True, dest="train_path")
    p.add_argument("--dev", required=True, dest="dev_path")
    p.add_argument("--max-steps", type=int, default=1000)
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--out", required=True, help="parameter file to write")
    p.add_argument("--log", default=None, help="JSON-lines training log path")

    p = sub.add_parser("eval", help="evaluate predictions on a labeled store")
    _shared_flags(p)
    p.add_argument("--store", required=True, help="datastore for retrieval")
    p.add_argument("--params", default=None, help="classifier parameters")
    p.add_argument("--input", required=True, help="labeled .femb store to score")

    p = sub.add_parser("pseudo-label", help="tag unlabeled embeddings with the model")
    _shared_flags(p)
    p.add_argument("--params", required=True)
    p.add_argument("--input", required=True, help="TSV embeddings (labels may be -1)")
    p.add_argument("--output", required=True, help="TSV of index/label/confidence")
    p.add_argument("--store-out", default=None, help="optional .femb of the tagged store")

    p = sub.add_parser("sweep", help="full-grid dev sweep over k, tau, lambda")
    _shared_flags(p)
    p.add_argument("--train", required=True, dest="train_path")
    p.add_argument("--dev", required=True, dest="dev_path")
    p.add_argument("--grid", default=None, help="JSON file with k/tau/lambda arrays")
    p.add_argument("--max-steps", type=int, default=1000)
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--hidden", type=int, default=None)

    p = sub.add_parser("factor-curve", help="emit (p, f(p)) samples for a factor")
    _shared_flags(p)
    p.add_argument("--kind", choices=("focal", "nll"), default="focal")
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--out", default=None, help="TSV path; stdout when omitted")

    return parser


def _config_from(args) -> RunConfig:
    factor = ModulatingFactor(kind=args.factor, gamma=args.gamma, alpha=args.alpha)
    fields = dict(
        k=args.k,
        tau=args.tau,
        lam=args.lam,
        metric=args.metric,
        factor=factor,
        mode=args.mode,
        seed=args.seed,
    )
    for name, key in (
        ("max_steps", "max_steps"),
        ("eval_every", "eval_every"),
        ("batch_size", "batch_size"),
        ("lr", "lr"),
        ("hidden", "hidden"),
    ):
        if hasattr(args, name):
            fields[key] = getattr(args, name)
    return RunConfig(**fields)


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        payload = {"schema": SCHEMA_VERSION, **payload}
        print(json.dumps(payload))
    else:
        print(human)


def _report_output(args, report) -> None:
    if args.json:
        print(json.dumps({"schema": SCHEMA_VERSION, "report": report.to_dict()}))
    else:
        print(f"n={report.n_examples}")
        print(f"accuracy={report.accuracy:.4f}")
        print(f"macro_f1={report.macro_f1:.4f}")
        print(f"micro_f1={report.micro_f1:.4f}")


def _cmd_build_store(args) -> int:
    raw = load_embeddings(args.input, format=args.format)
    store = build_store(raw)
    save_store(store, args.output)
    _emit(
        args,
        {"n": store.n, "d": store.dim, "c": store.class_count, "output": args.output},
        f"wrote {args.output}: n={store.n} d={store.dim} c={store.class_count}",
    )
    return EXIT_OK


def _cmd_knn_eval(args) -> int:
    store = load_store(args.store)
    queries = load_store(args.queries)
    config = replace(_config_from(args), mode="knn-only")
    _, preds = predict_batch(config, None, store, queries.vectors.astype(np.float64))
    report = evaluate(preds, queries.labels, queries.class_count)
    _report_output(args, report)
    return EXIT_OK


def _cmd_train(args) -> int:
    train = load_store(args.train_path)
    dev = load_store(args.dev_path)
    config = _config_from(args)
    params, log = train_calibrated(config, train, dev)
    save_params(params, args.out)
    if args.log:
        save_training_log(log, args.log)
    best = max((r["dev_accuracy"] for r in log), default=0.0)
    _emit(
        args,
        {"out": args.out, "best_dev_accuracy": best, "evaluations": len(log)},
        f"wrote {args.out}: best dev accuracy {best:.4f} over {len(log)} evaluations",
    )
    return EXIT_OK


def _cmd_eval(args) -> int:
    store = load_store(args.store)
    params = load_params(args.params) if args.params else None
    target = load_store(args.input)
    config = _config_from(args)
    _, preds = predict_batch(config, params, store, target.vectors.astype(np.float64))
    report = evaluate(preds, target.labels, target.class_count)
    _report_output(args, report)
    return EXIT_OK


def _cmd_pseudo_label(args) -> int:
    params = load_params(args.params)
    raw = load_embeddings(args.input, format="tsv", allow_unlabeled=True)
    labeled = pseudo_label(params, raw.vectors)
    save_pseudo_labels(labeled, args.output)
    if args.store_out:
        save_store(labeled.store, args.store_out)
    _emit(
        args,
        {"output": args.output, "n": labeled.store.n},
        f"wrote {args.output}: {labeled.store.n} pseudo-labeled rows",
    )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    train = load_store(args.train_path)
    dev = load_store(args.dev_path)
    config = _config_from(args)
    ks, taus, lambdas = DEFAULT_K_GRID, DEFAULT_TAU_GRID, DEFAULT_LAMBDA_GRID
    if args.grid:
        with open(args.grid, "r", encoding="utf-8") as handle:
            grid = json.load(handle)
        ks = tuple(grid.get("k", ks))
        taus = tuple(grid.get("tau", taus))
        lambdas = tuple(grid.get("lambda", lambdas))
    results = sweep(config, train, dev, ks=ks, taus=taus, lambdas=lambdas)
    if args.json:
        print(
            json.dumps(
                {"schema": SCHEMA_VERSION, "results": [r.to_dict() for r in results]}
            )
        )
    else:
        print("k\ttau\tlambda\teff_k\tdev_acc\tdev_macro_f1")
        for r in results:
            print(
                f"{r.k}\t{r.tau}\t{r.lam}\t{r.effective_k}"
                f"\t{r.dev_accuracy:.4f}\t{r.dev_macro_f1:.4f}"
            )
    return EXIT_OK


def _cmd_factor_curve(args) -> int:
    if args.points < 2:
        raise DataError(f"need at least 2 points, got {args.points}")
    factor = ModulatingFactor(kind=args.kind, gamma=args.gamma, alpha=args.alpha)
    ps = np.linspace(0.0, 1.0, args.points)
    values = factor_value(factor, ps)
    lines = [f"{float(p)!r}\t{float(v)!r}" for p, v in zip(ps, values)]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


_HANDLERS = {
    "build-store": _cmd_build_store,
    "knn-eval": _cmd_knn_eval,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "pseudo-label": _cmd_pseudo_label,
    "sweep": _cmd_sweep,
    "factor-curve": _cmd_factor_curve,
}


def run(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
