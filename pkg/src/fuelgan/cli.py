"""fuelgan command line: one subcommand per pipeline stage.

Exit codes: 0 success, 2 I/O error, 3 invalid config, 4 data/precondition error.
Failures print a single ``fuelgan: error: <category>: <message>`` line on stderr.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import augment as augment_mod
from . import data, forest, gan, metrics, synth
from .config import RunConfig, load_config
from .errors import ConfigError, FuelGanError

CONFIG_ENV = "FUELGAN_CONFIG"
CALIBRATION_MAX_ROWS = 20000

log = logging.getLogger("fuelgan")


def _config(args) -> RunConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
    cfg = load_config(path)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _file_id(path) -> str:
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
    return f"{Path(path).name}:{digest}"


def cmd_synth(args):
    cfg = _config(args)
    meta = synth.generate(cfg.synth, args.out, cfg.fingerprint())
    print(f"wrote {meta['rows']} rows to {args.out}")


def cmd_preprocess(args):
    cfg = _config(args)
    records, rejections = data.load_csv(args.inp)
    kept = []
    for r in records:
        reason = data.defect_reason(r)
        if reason:
            rejections.append(data.Rejection(r.line, reason))
        else:
            kept.append(r)
    rejections.sort(key=lambda r: r.line)
    ds = data.build_dataset(kept, cfg.label_rules, cfg.test_fraction, cfg.seed)
    fp = cfg.fingerprint()
    data.write_dataset(ds, args.out, {"fingerprint": fp, "source": _file_id(args.inp)})
    rej_path = args.rejections or f"{args.out}.rejections.csv"
    data.write_rejections(rejections, rej_path, fp)
    if args.plot_dir:
        Path(args.plot_dir).mkdir(parents=True, exist_ok=True)
        for kind in data.PLOT_KINDS:
            data.export_plot_data(ds, kind, Path(args.plot_dir) / f"{kind}.csv",
                                  cfg.label_rules.running_time_threshold, fp)
    print(f"{len(ds)} rows kept ({int(ds.labels.sum())} anomalous), {len(rejections)} rejected")


def cmd_augment(args):
    cfg = _config(args)
    ds = data.read_dataset(args.inp)
    out = augment_mod.augment(ds, cfg.augment)
    data.write_dataset(out, args.out, {"fingerprint": cfg.fingerprint(), "source": _file_id(args.inp)})
    print(f"{len(ds)} -> {len(out)} rows")


def cmd_importance(args):
    cfg = _config(args)
    ds = data.read_dataset(args.inp)
    f = forest.fit(ds.X, ds.labels, cfg.forest)
    report = forest.feature_importance(f, ds.feature_names)
    report.to_csv(args.out, cfg.fingerprint())
    top = report.ranking[0]
    print(f"most important: {report.feature_names[top]} ({report.importances[top]:.4f})")


def cmd_correlate(args):
    cfg = _config(args)
    ds = data.read_dataset(args.inp)
    C = data.correlation_matrix(ds.X)
    data.write_matrix_csv(ds.feature_names, C, args.out, cfg.fingerprint())


def _training_rows(ds: data.ProcessedDataset):
    scaler = data.MinMaxScaler.fit(ds.X[ds.train_mask], ds.feature_names)
    Z = scaler.transform(ds.X)
    return scaler, Z[ds.train_mask & (ds.labels == 0)]


def cmd_train(args):
    cfg = _config(args)
    ds = data.read_dataset(args.inp)
    scaler, rows = _training_rows(ds)
    gcfg = cfg.gan.with_feature_dim(rows.shape[1])
    if args.iterations is not None:
        gcfg.iterations = args.iterations
        gcfg.validate()
    model, trace = gan.train(gcfg, rows)
    model.scaler = scaler.to_dict()
    fp = cfg.fingerprint()
    gan.save_model(model, args.model_out, fp)
    if args.trace_out:
        trace.to_csv(args.trace_out, fp)
    print(f"trained {gcfg.iterations} iterations on {rows.shape[0]} normal rows")


def _scaled(model: gan.GanModel, ds: data.ProcessedDataset) -> np.ndarray:
    if model.scaler is None:
        raise ConfigError("model file carries no scaler")
    scaler = data.MinMaxScaler.from_dict(model.scaler)
    if scaler.feature_names and scaler.feature_names != ds.feature_names:
        raise FuelGanError("dataset features do not match the model's scaler")
    return scaler.transform(ds.X)


def _original_train_rows(ds: data.ProcessedDataset) -> np.ndarray:
    train = np.flatnonzero(ds.train_mask)
    if ds.source_row is not None:
        _, first = np.unique(ds.source_row[train], return_index=True)
        train = train[np.sort(first)]
    return train


def cmd_evaluate(args):
    cfg = _config(args)
    ds = data.read_dataset(args.inp)
    model = gan.load_model(args.model)
    Z = _scaled(model, ds)
    calibrate = args.calibrate or (cfg.calibrate and args.threshold is None)
    if calibrate:
        rows = _original_train_rows(ds)
        if rows.size > CALIBRATION_MAX_ROWS:
            rng = np.random.Generator(np.random.PCG64(cfg.seed))
            rows = np.sort(rng.choice(rows, CALIBRATION_MAX_ROWS, replace=False))
        threshold = gan.calibrate_threshold(gan.anomaly_scores(model, Z[rows]), ds.labels[rows])
    else:
        threshold = cfg.threshold if args.threshold is None else args.threshold
    test = ds.is_test
    scores = gan.anomaly_scores(model, Z[test])
    report = metrics.evaluate(
        ds.labels[test], scores > threshold, threshold,
        dataset=_file_id(args.inp),
        fingerprint=cfg.fingerprint(),
        label_rules_fingerprint=ds.meta.get("label_rules_fingerprint", ""),
        extra={"rows_evaluated": int(test.sum()),
               "threshold_mode": "calibrated" if calibrate else "fixed",
               "model": _file_id(args.model)},
    )
    metrics.save_report(report, args.out)
    acc = "undefined" if report.accuracy is None else f"{report.accuracy:.4f}"
    print(f"accuracy {acc} at threshold {threshold:.6g}")


def cmd_score(args):
    cfg = _config(args)
    ds = data.read_dataset(args.inp)
    model = gan.load_model(args.model)
    threshold = cfg.threshold if args.threshold is None else args.threshold
    results = gan.score(model, _scaled(model, ds), threshold)
    with Path(args.out).open("w", encoding="utf-8") as fh:
        fh.write(f"# fingerprint={cfg.fingerprint()}\n")
        fh.write("row,probability_real,anomaly_score,predicted_label,threshold,label\n")
        for i, s in enumerate(results):
            fh.write(f"{i},{s.probability_real!r},{s.anomaly_score!r},{s.predicted_label},"
                     f"{s.threshold!r},{int(ds.labels[i])}\n")


def cmd_compare(args):
    cfg = _config(args)
    a = metrics.load_report(args.report_a)
    b = metrics.load_report(args.report_b)
    rows = metrics.compare_table(a, b, (args.name_a, args.name_b))
    metrics.write_rows(rows, args.out, cfg.fingerprint())


def cmd_export_plot(args):
    cfg = _config(args)
    ds = data.read_dataset(args.inp)
    data.export_plot_data(ds, args.kind, args.out, cfg.label_rules.running_time_threshold, cfg.fingerprint())


def cmd_pipeline(args):
    """synth -> preprocess -> importance/correlate -> train/evaluate with and without augmentation."""
    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    common = []
    if args.config:
        common += ["--config", args.config]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]
    eval_flags = ["--calibrate"] if args.calibrate else []
    steps = [
        ["synth", "--out", str(work / "raw.csv")],
        ["preprocess", "--in", str(work / "raw.csv"), "--out", str(work / "dataset.csv"),
         "--plot-dir", str(work / "plots")],
        ["importance", "--in", str(work / "dataset.csv"), "--out", str(work / "importance.csv")],
        ["correlate", "--in", str(work / "dataset.csv"), "--out", str(work / "correlation.csv")],
        ["train", "--in", str(work / "dataset.csv"), "--model-out", str(work / "model.json"),
         "--trace-out", str(work / "trace.csv")],
        ["evaluate", "--in", str(work / "dataset.csv"), "--model", str(work / "model.json"),
         "--out", str(work / "report.json"), *eval_flags],
        ["augment", "--in", str(work / "dataset.csv"), "--out", str(work / "augmented.csv")],
        ["train", "--in", str(work / "augmented.csv"), "--model-out", str(work / "model_aug.json"),
         "--trace-out", str(work / "trace_aug.csv")],
        ["evaluate", "--in", str(work / "augmented.csv"), "--model", str(work / "model_aug.json"),
         "--out", str(work / "report_aug.json"), *eval_flags],
        ["compare", "--report-a", str(work / "report.json"), "--report-b", str(work / "report_aug.json"),
         "--out", str(work / "comparison.csv")],
    ]
    for step in steps:
        print(f"== {step[0]}")
        code = main(step + common)
        if code:
            raise SystemExit(code)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fuelgan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help=f"run config JSON (default: ${CONFIG_ENV} or built-in defaults)")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic raw log CSV")
    p.add_argument("--out", required=True)

    p = add("preprocess", cmd_preprocess, "clean, derive features, label and split")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rejections", help="rejection report path (default: <out>.rejections.csv)")
    p.add_argument("--plot-dir", help="also write running-time plot data here")

    p = add("augment", cmd_augment, "add noisy copies of the training rows")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)

    p = add("importance", cmd_importance, "random-forest feature importance")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)

    p = add("correlate", cmd_correlate, "Pearson correlation matrix")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train the GAN on normal training rows")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--trace-out")
    p.add_argument("--iterations", type=int, help="override gan.iterations")

    p = add("evaluate", cmd_evaluate, "score the test split and write an evaluation report")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--threshold", type=float)
    g.add_argument("--calibrate", action="store_true",
                   help="pick the F1-maximizing threshold on the labeled training rows")

    p = add("score", cmd_score, "per-row anomaly scores")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float)

    p = add("compare", cmd_compare, "side-by-side metrics of two reports")
    p.add_argument("--report-a", required=True)
    p.add_argument("--report-b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name-a", default="without augmentation")
    p.add_argument("--name-b", default="with augmentation")

    p = add("export-plot", cmd_export_plot, "running-time-per-day plot data")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--kind", choices=data.PLOT_KINDS, required=True)
    p.add_argument("--out", required=True)

    p = add("pipeline", cmd_pipeline, "run every stage into a work directory")
    p.add_argument("--workdir", required=True)
    p.add_argument("--calibrate", action="store_true")
    return parser


def _exit_code(exc: BaseException) -> tuple[int, str]:
    if isinstance(exc, ConfigError):
        return 3, "config"
    if isinstance(exc, (FileNotFoundError, IsADirectoryError, PermissionError, OSError)):
        return 2, "io"
    if isinstance(exc, FuelGanError):
        return 4, exc.category
    if isinstance(exc, (ValueError, json.JSONDecodeError)):
        return 4, "domain"
    raise exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except SystemExit:
        raise
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes, unknown types re-raised
        code, category = _exit_code(exc)
        msg = str(exc).replace("\n", " ")
        print(f"fuelgan: error: {category}: {msg}", file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
