"""Command-line entry point: simulate -> balance -> train -> eval -> quantize -> bench.

Every artifact-producing command writes ``<artifact>.manifest.json`` next to
its output, recording the command line, seed, inputs and SHA-256 hashes of
every file read or written.
"""

import argparse
import csv
import hashlib
import json
import os
import statistics
import sys
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from . import classifiers as clf
from . import neuralnet as nn
from . import quantizer as qz
from .balance import smote_tomek
from .receiver import write_pdp_csv
from .simulator import (
    PRESETS,
    DatasetParseError,
    Dataset,
    SchemaMismatch,
    load_scenario,
    rao_seed,
    draw_arrival_slots,
    read_dataset,
    run_scenario,
    simulate_rao,
    write_dataset,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_BAD_FLAG = 2
EXIT_UNKNOWN_COMMAND = 3
EXIT_MISSING_FILE = 4
EXIT_SCHEMA = 5

COMMANDS = ("simulate", "balance", "train", "eval", "quantize", "bench", "pipeline")
MODELS = clf.KINDS + ("mlp",)
# scenario -> (training dataset, test dataset)
SCENARIOS = {"S1": ("DS1", "DS1"), "S2": ("DS3", "DS3"), "S3": ("DS1", "DS2"), "S4": ("DS1", "DS3")}
DESK_SEEDS = (7, 11, 13)
DESK_MLP_EPOCHS = 200
# training rows the tree leaf-size defaults were sized for (90% of the full-scale balanced set)
FULL_SCALE_TRAIN_ROWS = 765_000
CALIB_ROWS = 1000
BENCH_ROWS = 64
TRAIN_FRACTION = 0.9

EXIT_CODES_HELP = f"""exit codes:
  {EXIT_OK}  success
  {EXIT_RUNTIME}  runtime failure (training diverged, invalid data values, ...)
  {EXIT_BAD_FLAG}  bad or missing flag
  {EXIT_UNKNOWN_COMMAND}  unknown subcommand
  {EXIT_MISSING_FILE}  input file not found
  {EXIT_SCHEMA}  schema mismatch in a dataset or model file
"""


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_BAD_FLAG, f"{self.prog}: {message}")


# ------------------------------------------------------------------ manifests

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(target, command, argv, inputs=(), outputs=(), seed=None, config=None):
    """Write ``<target>.manifest.json`` listing every input and output with its hash."""
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }
    path = f"{target}.manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _require(path):
    if not os.path.isfile(path):
        raise CliError(EXIT_MISSING_FILE, f"file not found: {path}")
    return path


def _read_data(path) -> Dataset:
    return read_dataset(_require(path))


def _parse_value(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _parse_params(items):
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise CliError(EXIT_BAD_FLAG, f"--param expects key=value, got {item!r}")
        out[key.strip()] = _parse_value(value.strip())
    return out


def _int_list(text):
    try:
        vals = [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("expected positive integers")
    return vals


def _seeded_rows(n, k, seed):
    """Sorted sample of ``min(n, k)`` row indices drawn with a fixed seed."""
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=min(n, k), replace=False))


# ------------------------------------------------------------------ model files

def _load_json(path):
    try:
        with open(_require(path)) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_SCHEMA, f"{path}: not a model file ({exc})") from None


def load_scorer(path):
    """``(name, score_fn)`` for any saved model; ``score_fn(X)`` returns probabilities."""
    d = _load_json(path)
    kind = d.get("kind") if isinstance(d, dict) else None
    try:
        if kind == "mlp":
            m = nn.from_dict(d)
            return "mlp", lambda X: np.atleast_1d(nn.forward(m, X))
        if kind == "quantized_mlp":
            qm = qz.from_dict(d)
            eng = qm.engine()
            return f"mlp_{'drq' if qm.mode == qz.DYNAMIC_RANGE else 'fiq'}", eng.forward_batch
        if kind in clf.KINDS or kind == "constant":
            m = clf.model_from_dict(d)
            return kind, m.predict_proba
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_SCHEMA, f"{path}: malformed {kind} model ({exc})") from None
    raise CliError(EXIT_SCHEMA, f"{path}: unknown model kind {kind!r}")


def _load_mlp(path) -> nn.MlpModel:
    d = _load_json(path)
    if not isinstance(d, dict) or d.get("kind") != "mlp":
        raise CliError(EXIT_SCHEMA, f"{path}: expected a real-valued mlp model file")
    try:
        return nn.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_SCHEMA, f"{path}: malformed mlp model ({exc})") from None


# ------------------------------------------------------------------ training helpers

def desk_hyperparams(kind, n_train):
    """Hyperparameters for desk-scale runs.

    Tree leaf sizes scale with the training-set size so the trees keep the
    relative granularity the defaults were sized for; the MLP trains longer
    because a desk-scale epoch holds far fewer updates.
    """
    if kind in ("dtree", "rforest"):
        leaf = clf.DEFAULTS[kind]["min_leaf"]
        return {"min_leaf": max(1, int(round(leaf * n_train / FULL_SCALE_TRAIN_ROWS)))}
    if kind == "mlp":
        return {"epochs": DESK_MLP_EPOCHS}
    return {}


def fit_model(kind, X, y, seed, params=None):
    params = dict(params or {})
    if kind == "mlp":
        return nn.train_mlp(X, y, seed=seed, **params)
    return clf.train_baseline(kind, X, y, params, seed=seed)


def score_model(model, X):
    if isinstance(model, nn.MlpModel):
        return np.atleast_1d(nn.forward(model, X))
    return model.predict_proba(X)


def save_any(model, path):
    if isinstance(model, nn.MlpModel):
        nn.save_mlp(model, path)
    else:
        clf.save_model(model, path)


def report_for(scores, truth) -> clf.MetricsReport:
    return clf.evaluate((np.asarray(scores) >= 0.5).astype(np.int64), truth)


# ------------------------------------------------------------------ pipeline

def prepare_scenarios(seed, jobs=1, overrides=None):
    """Simulate, balance and split DS1-DS3 for one seed.

    Returns ``{name: (raw, X, y, train_idx, test_idx)}`` where ``X, y`` is the
    balanced set and the indices split it 90/10.
    """
    out = {}
    for name, preset in PRESETS.items():
        cfg = replace(preset, seed=seed, **(overrides or {}))
        raw = run_scenario(cfg, jobs=jobs)
        X, y = smote_tomek(raw.features, raw.label, seed=seed)
        tr, te = clf.split_train_test(y, TRAIN_FRACTION, seed)
        out[name] = (raw, X, y, tr, te)
    return out


def run_seed(seed, models=MODELS, jobs=1, overrides=None, data=None, log=None):
    """Train every model on DS1 and DS3 and evaluate S1-S4; returns ``{(model, scenario): report}``."""
    data = data or prepare_scenarios(seed, jobs, overrides)
    results = {}
    for kind in models:
        fitted = {}
        for train_name in sorted({a for a, _ in SCENARIOS.values()}):
            _, X, y, tr, _ = data[train_name]
            params = desk_hyperparams(kind, len(tr))
            if kind == "rforest":
                params["jobs"] = jobs
            fitted[train_name] = fit_model(kind, X[tr], y[tr], seed, params)
        for scen, (a, b) in SCENARIOS.items():
            _, Xb, yb, _, te = data[b]
            results[(kind, scen)] = report_for(score_model(fitted[a], Xb[te]), yb[te])
            if log:
                log(f"seed {seed} {kind:8s} {scen}: balanced accuracy "
                    f"{results[(kind, scen)].balanced_accuracy:.4f}")
    return results


def median_metrics(per_seed):
    """Median over seeds of each metric; ``per_seed`` is a list of ``run_seed`` results."""
    keys = list(per_seed[0])
    out = {}
    for key in keys:
        reps = [r[key] for r in per_seed]
        out[key] = {name: statistics.median(getattr(r, name) for r in reps)
                    for name in ("precision", "recall", "specificity", "balanced_accuracy")}
    return out


def metrics_table_rows(medians):
    return [[m, s] + [f"{v[k]:.4f}" for k in ("precision", "recall", "specificity", "balanced_accuracy")]
            for (m, s), v in medians.items()]


def format_table(rows, header=clf.METRICS_HEADER):
    rows = [list(header)] + rows
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ------------------------------------------------------------------ commands

def cmd_simulate(args, argv):
    if args.config:
        cfg = load_scenario(_require(args.config))
    else:
        cfg = PRESETS[args.preset.upper()]
    overrides = {k: v for k, v in (("seed", args.seed), ("total_ues", args.total_ues),
                                   ("n_raos", args.n_raos)) if v is not None}
    cfg = replace(cfg, **overrides)
    data = run_scenario(cfg, jobs=args.jobs)
    write_dataset(data, args.out)
    outputs = [args.out]
    if args.pdp_dump:
        counts = draw_arrival_slots(cfg)
        busy = np.flatnonzero(counts)
        r = int(busy[0]) if len(busy) else 0
        outcome = simulate_rao(int(counts[r]), cfg, rao_seed(cfg, r), slot_id=r)
        write_pdp_csv(outcome.pdp, args.pdp_dump)
        outputs.append(args.pdp_dump)
    write_manifest(args.out, "simulate", argv, [args.config] if args.config else [], outputs,
                   seed=cfg.seed, config=args.config or cfg.label)
    print(f"{len(data)} rows, collision share {data.collision_share():.4f} -> {args.out}")


def cmd_balance(args, argv):
    data = _read_data(args.data)
    X, y = smote_tomek(data.features, data.label, k=args.k, seed=args.seed)
    n = len(y)
    # resampled rows no longer map to a single slot/bin; they keep the event id
    event = int(data.event_id[0]) if len(data) else 0
    out = Dataset(np.full(n, event), np.full(n, -1), np.full(n, -1), X, y)
    write_dataset(out, args.out)
    write_manifest(args.out, "balance", argv, [args.data], [args.out], seed=args.seed)
    counts = np.bincount(y, minlength=2)
    print(f"{len(data)} -> {n} rows (class 0: {counts[0]}, class 1: {counts[1]}) -> {args.out}")


def cmd_train(args, argv):
    data = _read_data(args.data)
    params = _parse_params(args.param)
    if args.model == "mlp":
        for flag in ("epochs", "batch_size", "lr", "val_fraction"):
            if getattr(args, flag) is not None:
                params[flag] = getattr(args, flag)
    elif args.jobs > 1 and args.model == "rforest":
        params.setdefault("jobs", args.jobs)
    model = fit_model(args.model, data.features, data.label, args.seed, params)
    save_any(model, args.out)
    write_manifest(args.out, "train", argv, [args.data], [args.out], seed=args.seed)
    print(f"trained {args.model} on {len(data)} rows -> {args.out}")


def cmd_eval(args, argv):
    inputs = []
    if args.scenario_pair:
        if not args.kind:
            raise CliError(EXIT_BAD_FLAG, "eval: --scenario-pair needs --kind")
        train_path, test_path = args.scenario_pair
        train, test = _read_data(train_path), _read_data(test_path)
        model = fit_model(args.kind, train.features, train.label, args.seed)
        name, scores = args.kind, score_model(model, test.features)
        inputs = [train_path, test_path]
    else:
        if not (args.model and args.data):
            raise CliError(EXIT_BAD_FLAG, "eval: give --model and --data, or --scenario-pair")
        name, scorer = load_scorer(args.model)
        test = _read_data(args.data)
        scores = scorer(test.features)
        inputs = [args.model, args.data]
    report = report_for(scores, test.label)
    row = clf.metrics_rows([(name, args.scenario, report)])[0] + [report.tp, report.fp, report.tn, report.fn]
    _write_csv(args.out, clf.METRICS_HEADER + ["tp", "fp", "tn", "fn"], [row])
    write_manifest(args.out, "eval", argv, inputs, [args.out], seed=args.seed)
    print(format_table([row[:6]]))


def _calibration(path, seed):
    data = _read_data(path)
    if len(data) == 0:
        raise CliError(EXIT_RUNTIME, f"{path}: calibration set is empty")
    return data.features[_seeded_rows(len(data), CALIB_ROWS, seed)]


def cmd_quantize(args, argv):
    model = _load_mlp(args.model)
    inputs = [args.model]
    if args.mode == "drq":
        qm = qz.quantize_dynamic_range(model)
    else:
        if not args.calib:
            raise CliError(EXIT_BAD_FLAG, "quantize: --mode fiq needs --calib")
        qm = qz.quantize_full_integer(model, _calibration(args.calib, args.seed))
        inputs.append(args.calib)
    qz.save_quantized(qm, args.out)
    write_manifest(args.out, "quantize", argv, inputs, [args.out], seed=args.seed)
    print(f"{qm.mode} model -> {args.out}")


def cmd_bench(args, argv):
    data = _read_data(args.data)
    if len(data) == 0:
        raise CliError(EXIT_RUNTIME, f"{args.data}: no rows to benchmark")
    samples = data.features[_seeded_rows(len(data), args.n, args.seed)]
    d = _load_json(args.model)
    inputs = [args.model, args.data]
    if isinstance(d, dict) and d.get("kind") == "quantized_mlp":
        engines = [qz.from_dict(d).engine()]
    else:
        model = _load_mlp(args.model)
        engines = []
        for mode in args.modes.split(","):
            mode = mode.strip()
            if mode == "real":
                engines.append(qz.real_engine(model))
            elif mode == "drq":
                engines.append(qz.quantize_dynamic_range(model).engine())
            elif mode == "fiq":
                calib = args.calib or args.data
                engines.append(qz.quantize_full_integer(model, _calibration(calib, args.seed)).engine())
                if args.calib:
                    inputs.append(args.calib)
            else:
                raise CliError(EXIT_BAD_FLAG, f"bench: unknown mode {mode!r} (real, drq, fiq)")
    results = [qz.benchmark_latency(e, samples, threads=t, warmup=args.warmup)
               for t in args.threads for e in engines]
    qz.write_bench_csv(results, args.out)
    # timings are host-dependent, so the manifest records inputs but the CSV is not reproducible
    write_manifest(args.out, "bench", argv, inputs, [args.out], seed=args.seed)
    for r in results:
        print(f"{r.mode:14s} threads={r.threads}  mean {r.mean_latency * 1e6:8.3f} us  "
              f"se {r.std_error * 1e6:.4f} us  [{r.backend}]")


def cmd_pipeline(args, argv):
    os.makedirs(args.out_dir, exist_ok=True)
    overrides = {k: v for k, v in (("total_ues", args.total_ues), ("n_raos", args.n_raos))
                 if v is not None}
    outputs, per_seed = [], []
    log = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    for seed in args.seeds:
        data = prepare_scenarios(seed, args.jobs, overrides)
        for name, (raw, X, y, _, _) in data.items():
            raw_path = os.path.join(args.out_dir, f"{name.lower()}_seed{seed}.csv")
            write_dataset(raw, raw_path)
            bal_path = os.path.join(args.out_dir, f"{name.lower()}_seed{seed}_balanced.csv")
            n = len(y)
            write_dataset(Dataset(np.full(n, raw.event_id[0] if len(raw) else 0), np.full(n, -1),
                                  np.full(n, -1), X, y), bal_path)
            outputs += [raw_path, bal_path]
        res = run_seed(seed, jobs=args.jobs, data=data, log=log)
        per_seed.append(res)
        path = os.path.join(args.out_dir, f"metrics_seed{seed}.csv")
        _write_csv(path, clf.METRICS_HEADER + ["tp", "fp", "tn", "fn"],
                   [row + [r.tp, r.fp, r.tn, r.fn]
                    for row, r in zip(clf.metrics_rows([(m, s, r) for (m, s), r in res.items()]),
                                      res.values())])
        outputs.append(path)
    medians = median_metrics(per_seed)
    rows = metrics_table_rows(medians)
    table_path = os.path.join(args.out_dir, "metrics.csv")
    _write_csv(table_path, clf.METRICS_HEADER, rows)
    outputs.append(table_path)
    write_manifest(os.path.join(args.out_dir, "pipeline"), "pipeline", argv, [], outputs,
                   seed=list(args.seeds), config="desk-scale")
    print(f"median over seeds {', '.join(map(str, args.seeds))}")
    print(format_table(rows))


# ------------------------------------------------------------------ parser

def build_parser():
    p = _Parser(
        prog="rachml",
        description="PRACH collision-detection pipeline: simulate, balance, train, evaluate, "
                    "quantize and benchmark.",
        epilog=EXIT_CODES_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=f"rachml {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    fmt = dict(formatter_class=argparse.ArgumentDefaultsHelpFormatter, epilog=EXIT_CODES_HELP)

    s = sub.add_parser("simulate", help="simulate a scenario into a dataset CSV", **fmt)
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="scenario INI file ([scenario] and optional [channel])")
    src.add_argument("--preset", choices=sorted(PRESETS) + [k.lower() for k in sorted(PRESETS)],
                     help="built-in desk-scale scenario")
    s.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    s.add_argument("--total-ues", type=int, default=None, help="override the UE count")
    s.add_argument("--n-raos", type=int, default=None, help="override the RAO count")
    s.add_argument("--out", required=True, help="output dataset CSV")
    s.add_argument("--jobs", type=int, default=1, help="worker processes")
    s.add_argument("--pdp-dump", metavar="CSV", default=None,
                   help="also write the PDP of the first busy RAO as index,power")

    b = sub.add_parser("balance", help="SMOTE-Tomek balance a dataset CSV", **fmt)
    b.add_argument("--data", required=True, help="input dataset CSV")
    b.add_argument("--out", required=True, help="balanced dataset CSV")
    b.add_argument("--seed", type=int, default=0, help="oversampling seed")
    b.add_argument("--k", type=int, default=5, help="SMOTE neighbours")

    t = sub.add_parser("train", help="train a baseline classifier or the MLP", **fmt)
    t.add_argument("--data", required=True, help="training dataset CSV")
    t.add_argument("--model", required=True, choices=MODELS, help="model kind")
    t.add_argument("--out", required=True, help="output model file (JSON)")
    t.add_argument("--seed", type=int, default=0, help="training seed")
    t.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="baseline hyperparameter override (repeatable), e.g. min_leaf=5")
    t.add_argument("--epochs", type=int, default=None, help="mlp epochs (default 50)")
    t.add_argument("--batch-size", type=int, default=None, help="mlp batch size (default 256)")
    t.add_argument("--lr", type=float, default=None, help="mlp learning rate (default 1e-3)")
    t.add_argument("--val-fraction", type=float, default=None, help="mlp validation share (default 0.1)")
    t.add_argument("--jobs", type=int, default=1, help="random-forest worker threads")

    e = sub.add_parser("eval", help="evaluate a model on a dataset", **fmt)
    e.add_argument("--model", help="model file (baseline, mlp or quantized)")
    e.add_argument("--data", help="test dataset CSV")
    e.add_argument("--scenario-pair", nargs=2, metavar=("TRAIN_CSV", "TEST_CSV"),
                   help="train --kind on TRAIN_CSV and test on TEST_CSV (cross-dataset)")
    e.add_argument("--kind", choices=MODELS, help="model kind for --scenario-pair")
    e.add_argument("--scenario", default="-", help="scenario label written to the metrics row")
    e.add_argument("--seed", type=int, default=0, help="training seed for --scenario-pair")
    e.add_argument("--out", required=True, help="metrics CSV")

    q = sub.add_parser("quantize", help="post-training int8 quantization of an mlp", **fmt)
    q.add_argument("--model", required=True, help="real-valued mlp model file")
    q.add_argument("--mode", required=True, choices=("drq", "fiq"),
                   help="drq: int8 weights; fiq: int8 weights and activations")
    q.add_argument("--calib", help=f"calibration dataset CSV for fiq ({CALIB_ROWS} rows are sampled)")
    q.add_argument("--seed", type=int, default=0, help="calibration sampling seed")
    q.add_argument("--out", required=True, help="output quantized model file")

    n = sub.add_parser("bench", help="per-inference latency benchmark", **fmt)
    n.add_argument("--model", required=True, help="mlp or quantized model file")
    n.add_argument("--data", required=True, help="dataset CSV the benchmark rows are drawn from")
    n.add_argument("--calib", help="calibration CSV for fiq (defaults to --data)")
    n.add_argument("--modes", default="real,drq,fiq", help="engines to time for an mlp file")
    n.add_argument("--threads", type=_int_list, default=[1, 2, 4], help="thread counts, e.g. 1,2,4")
    n.add_argument("--n", type=int, default=BENCH_ROWS, help="timed rows")
    n.add_argument("--warmup", type=int, default=100, help="untimed warm-up inferences per worker")
    n.add_argument("--seed", type=int, default=0, help="row sampling seed")
    n.add_argument("--out", required=True, help="benchmark CSV")

    pl = sub.add_parser("pipeline", help="run scenarios S1-S4 end to end and print the metrics table", **fmt)
    pl.add_argument("--desk-scale", action="store_true",
                    help="desk-scale presets: 2000 UEs, 200 RAOs, 54 preambles, 2 antennas (the default)")
    pl.add_argument("--seeds", type=_int_list, default=list(DESK_SEEDS), help="seeds; medians are reported")
    pl.add_argument("--total-ues", type=int, default=None, help="override the UE count")
    pl.add_argument("--n-raos", type=int, default=None, help="override the RAO count")
    pl.add_argument("--out-dir", default="runs/pipeline", help="artifact directory")
    pl.add_argument("--jobs", type=int, default=1, help="simulation processes / forest threads")
    pl.add_argument("-v", "--verbose", action="store_true", help="log per-seed results to stderr")
    return p


HANDLERS = {"simulate": cmd_simulate, "balance": cmd_balance, "train": cmd_train, "eval": cmd_eval,
            "quantize": cmd_quantize, "bench": cmd_bench, "pipeline": cmd_pipeline}


def run_command(argv) -> int:
    argv = list(argv)
    parser = build_parser()
    try:
        first = next((a for a in argv if not a.startswith("-")), None)
        if first is not None and first not in COMMANDS:
            raise CliError(EXIT_UNKNOWN_COMMAND,
                           f"unknown command {first!r} (choose from {', '.join(COMMANDS)})")
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:     # --help / --version
            return int(exc.code or 0)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_BAD_FLAG
        if getattr(args, "jobs", 1) < 1:
            raise CliError(EXIT_BAD_FLAG, "--jobs must be >= 1")
        HANDLERS[args.command](args, argv)
        return EXIT_OK
    except CliError as exc:
        msg, code = str(exc), exc.code
    except FileNotFoundError as exc:
        msg, code = f"file not found: {exc.filename}", EXIT_MISSING_FILE
    except (SchemaMismatch, DatasetParseError) as exc:
        msg, code = str(exc), EXIT_SCHEMA
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        msg, code = f"{type(exc).__name__}: {exc}", EXIT_RUNTIME
    print(f"rachml: error: {msg}".splitlines()[0], file=sys.stderr)
    return code


def main(argv=None):
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
