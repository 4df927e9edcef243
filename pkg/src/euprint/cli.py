"""Command-line front door: simulation, evaluation, linking, and the service.

Each subcommand wires files to one library entry point and prints machine-
readable output (JSON to stdout, CSV behind --csv) so runs can be scripted.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import embedder, evalbench, forest, ingest, linker, synthdevice, tracemodel


def _load_corpus(path: str) -> list[tracemodel.FingerprintRecord]:
    records = list(tracemodel.iter_corpus(path))
    if not records:
        raise SystemExit(f"no records in {path}")
    return records


def _trace_corpus(records) -> list[tuple]:
    return [(tracemodel.preprocess(t), r.true_device)
            for r in records for t in r.traces]


def _matrix_features(records) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([tracemodel.preprocess(t).matrix.ravel()
                  for r in records for t in r.traces])
    y = np.asarray([r.true_device for r in records for _ in r.traces])
    return X, y


def _write_csv(path: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("metric", "value"))
        writer.writerows(rows)


# --- subcommands ---

def cmd_simulate(args) -> None:
    scenario = synthdevice.load_scenario(args.scenario)
    records = synthdevice.run_scenario(scenario)
    tracemodel.write_corpus(records, args.out)
    print(json.dumps({"records": len(records), "out": args.out}))


def cmd_eval_lab(args) -> None:
    records = _load_corpus(args.corpus)
    X, y = _matrix_features(records)
    cfg = forest.ForestConfig(n_trees=args.trees,
                              min_samples_leaf=args.min_leaf, seed=args.seed)
    mean, std = forest.kfold_accuracy(X, y, cfg, args.folds)
    base = evalbench.base_rate_classical(y.tolist(), 1)
    print(json.dumps({
        "folds": args.folds,
        "accuracy_mean": mean,
        "accuracy_std": std,
        "base_rate": base,
        "gain": forest.accuracy_gain(mean, base),
    }))


def cmd_train_embedder(args) -> None:
    records = _load_corpus(args.corpus)
    spec = embedder.preset_spec(args.preset, seed=args.seed)
    tcfg = embedder.TripletConfig(
        margin=args.margin, batch_size=args.batch_size, epochs=args.epochs,
        learning_rate=args.learning_rate, phase1_epochs=args.phase1_epochs)
    result = embedder.train(_trace_corpus(records), spec, tcfg)
    chosen = result.final_weights if args.keep_final else result.weights
    embedder.save_weights(chosen, args.out)
    print(json.dumps({
        "out": args.out,
        "devices": len(result.classes),
        "best_epoch": result.best_epoch,
        "val_accuracy": result.val_accuracy[result.best_epoch],
        "phase1_loss": result.phase1_loss,
        "triplet_loss": result.triplet_loss,
    }))


def _pair_forest(records, rules, seed: int):
    X, y = linker.pair_training_set(records, rules, np.random.default_rng([seed, 0x11]))
    cfg = forest.ForestConfig(n_trees=25, min_samples_leaf=2, seed=seed)
    return forest.fit(X, y, cfg, binary=True)


def cmd_link(args) -> None:
    gallery_records = _load_corpus(args.gallery)
    incoming = _load_corpus(getattr(args, "in"))
    rules = linker.default_rules()
    cfg = linker.LinkerConfig(
        forest_threshold=getattr(args, "lambda"),
        similarity_threshold=None if args.no_drawnapart else args.epsilon,
        rules=rules,
    )
    weights = embedder.load_weights(args.weights) if args.weights else None
    if args.forest:
        model = forest.from_json(Path(args.forest).read_text())
    else:
        model = _pair_forest(gallery_records, rules, args.seed)

    matcher = linker.Matcher(cfg, forest=model, weights=weights)
    for record in sorted(gallery_records, key=lambda r: (r.collected_at, r.client_id)):
        matcher.enroll(record, record.true_device)
    for index, record in enumerate(
            sorted(incoming, key=lambda r: (r.collected_at, r.client_id))):
        outcome = matcher.observe(record)
        print(json.dumps({"record_index": index,
                          "assigned_id": outcome.assigned_id}))


def cmd_eval_wild(args) -> None:
    records = _load_corpus(args.corpus)
    weights = embedder.load_weights(args.weights)
    if args.mode == "random-split":
        spec = evalbench.SplitSpec(min_collections=args.min_collections,
                                   seed=args.seed)
        report = evalbench.run_random_split(records, weights, spec)
    elif args.mode.startswith("kshot:"):
        report = evalbench.run_kshot(records, weights, int(args.mode[6:]),
                                     min_collections=args.min_collections)
    else:
        raise SystemExit(f"unknown mode {args.mode!r}")
    print(json.dumps(report.to_json()))
    if args.csv:
        _write_csv(args.csv, report.csv_rows())


def _parse_periods(text: str) -> tuple[int, ...]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(p) for p in text.split(","))


def cmd_track(args) -> None:
    records = _load_corpus(args.corpus)
    weights = embedder.load_weights(args.weights)
    rules = linker.default_rules()
    model = _pair_forest(records, rules, args.seed)
    baseline = linker.LinkerConfig(forest_threshold=getattr(args, "lambda"),
                                   similarity_threshold=None, rules=rules)
    hybrid = linker.LinkerConfig(forest_threshold=getattr(args, "lambda"),
                                 similarity_threshold=args.epsilon, rules=rules)
    rows = evalbench.run_tracking(records, baseline, hybrid, model, weights,
                                  periods=_parse_periods(args.periods))
    out = [{
        "period_days": row.period_days,
        "baseline_mean": row.baseline_mean,
        "baseline_median": row.baseline_median,
        "hybrid_mean": row.hybrid_mean,
        "hybrid_median": row.hybrid_median,
        "improvement_pct": row.improvement_pct,
    } for row in rows]
    print(json.dumps(out))
    if args.csv:
        flat = []
        for row in out:
            period = row["period_days"]
            flat += [(f"p{period:g}_{key}", value)
                     for key, value in row.items() if key != "period_days"]
        _write_csv(args.csv, flat)


def cmd_serve(args) -> None:
    store_dir = ingest.resolve_store_dir(args.store)
    print(json.dumps({"store": str(store_dir), "port": args.port}),
          file=sys.stderr)
    ingest.serve(store_dir, args.port)


def cmd_export(args) -> None:
    store_dir = ingest.resolve_store_dir(args.store)
    since = tracemodel.parse_timestamp(getattr(args, "from")) if getattr(args, "from") else None
    until = tracemodel.parse_timestamp(args.to) if args.to else None
    records, skipped = ingest.export_corpus(store_dir, since=since, until=until,
                                            clients=args.client or None)
    out = args.out or "-"
    if out == "-":
        for record in records:
            sys.stdout.buffer.write(tracemodel.serialize_record(record) + b"\n")
    else:
        tracemodel.write_corpus(records, out)
    print(json.dumps({"records": len(records), "skipped_lines": skipped}),
          file=sys.stderr)


def cmd_purge(args) -> None:
    store_dir = ingest.resolve_store_dir(args.store)
    removed = ingest.TraceStore(store_dir).purge(args.client)
    print(json.dumps({"client": args.client, "removed": removed}))


# --- parser wiring ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="euprint",
        description="GPU execution-unit timing fingerprints: simulate, "
                    "classify, embed, link, serve.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a scenario file into a corpus")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval-lab", help="k-fold forest accuracy on raw traces")
    p.add_argument("--corpus", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--trees", type=int, default=50)
    p.add_argument("--min-leaf", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval_lab)

    p = sub.add_parser("train-embedder", help="fit the trace embedding network")
    p.add_argument("--corpus", required=True)
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="embedder-weights.bin")
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--phase1-epochs", type=int, default=20)
    p.add_argument("--keep-final", action="store_true",
                   help="save end-of-training weights instead of best-validation")
    p.set_defaults(func=cmd_train_embedder)

    p = sub.add_parser("link", help="assign incoming records to gallery chains")
    p.add_argument("--gallery", required=True)
    p.add_argument("--in", required=True)
    p.add_argument("--epsilon", type=float, default=0.15)
    p.add_argument("--lambda", type=float, default=0.90)
    p.add_argument("--no-drawnapart", action="store_true",
                   help="disable the embedding short circuit")
    p.add_argument("--weights", default=None)
    p.add_argument("--forest", default=None,
                   help="pairwise forest JSON; default trains one from the gallery")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("eval-wild", help="top-k retrieval evaluation")
    p.add_argument("--corpus", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--mode", default="random-split",
                   help="random-split or kshot:K")
    p.add_argument("--min-collections", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_eval_wild)

    p = sub.add_parser("track", help="tracking-duration replay, both linkers")
    p.add_argument("--corpus", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--periods", default="2..7")
    p.add_argument("--epsilon", type=float, default=0.15)
    p.add_argument("--lambda", type=float, default=0.90)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("serve", help="run the submission endpoint")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--store", default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export", help="dump the store as an NDJSON corpus")
    p.add_argument("--store", default=None)
    p.add_argument("--from", default=None)
    p.add_argument("--to", default=None)
    p.add_argument("--client", action="append", default=[])
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("purge", help="delete every record of one client id")
    p.add_argument("--client", required=True)
    p.add_argument("--store", default=None)
    p.set_defaults(func=cmd_purge)

    return parser


# predictable operator mistakes: bad files, thin corpora, missing models
_USER_ERRORS = (
    FileNotFoundError,
    IsADirectoryError,
    tracemodel.MalformedDocument,
    tracemodel.SchemaViolation,
    tracemodel.LengthMismatch,
    forest.EmptyDataset,
    forest.SingleClassDataset,
    forest.InsufficientSamplesPerClass,
    embedder.InsufficientData,
    embedder.ShapeMismatch,
    linker.InsufficientPairs,
    linker.UntrainedModel,
    evalbench.EmptyDataset,
    evalbench.InsufficientData,
    evalbench.InsufficientCollections,
    evalbench.SpanTooShort,
)


def main(argv=None) -> None:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except _USER_ERRORS as exc:
        raise SystemExit(f"error: {exc}") from exc


if __name__ == "__main__":
    main()
