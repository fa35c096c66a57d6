"""Command line pipeline: simulate, prepare, train, gridsearch, evaluate,
transfer, and report.

Every command is deterministic given identical inputs and seeds; run
directories hold config.json plus the artifacts of their stage.  Exit
codes: 0 on success, 2 for configuration or input errors, 3 for
numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .charts import bar_chart, line_chart, save_svg
from .exceptions import (
    ConfigError, InsufficientDataError, NumericalError, StickSlipError,
)
from .metrics import confusion_matrix, normalized_dtw, severe_recall
from .models import load_bundle, predict_ssi, save_bundle
from .simulate import WellSpec, read_well_csv, simulate_well, write_well_csv
from .training import (
    GridSpec, TrainConfig, _cell_config, grid_search, predicted_classes,
    save_grid_results, save_training_log, train,
)
from .transfer import save_transfer_report, transfer_report
from .windowing import assemble_split, class_histogram, load_split, save_split

STAGE_ALIASES = {"reg": "regularization", "regularization": "regularization",
                 "arch": "architecture", "architecture": "architecture"}

PREDICTION_COLUMNS = ("well", "t_start", "true_ssi", "pred_ssi",
                      "true_class", "pred_class")


def _load_json(path: Path, what: str) -> dict:
    if not path.is_file():
        raise ConfigError(f"expected {what} at {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON: {exc}") from exc


def _write_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _format_value(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _read_manifest_wells(wells_dir: Path) -> list:
    manifest_path = wells_dir / "manifest.json"
    manifest = _load_json(manifest_path, "well manifest")
    if "wells" not in manifest or not manifest["wells"]:
        raise ConfigError(f"{manifest_path} lists no wells")
    records = []
    for entry in manifest["wells"]:
        csv_path = wells_dir / entry["file"]
        if not csv_path.is_file():
            raise ConfigError(f"expected well data at {csv_path}")
        records.append(read_well_csv(csv_path, entry["well_id"],
                                     entry["field_id"]))
    return records


# ----------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    spec_dir = Path(args.spec_dir)
    if not spec_dir.is_dir():
        raise ConfigError(f"expected spec directory at {spec_dir}")
    spec_files = sorted(spec_dir.glob("*.json"))
    if not spec_files:
        raise ConfigError(f"no well spec JSON files in {spec_dir}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for path in spec_files:
        try:
            spec = WellSpec.from_json(path.read_text(encoding="utf-8"))
        except ConfigError as exc:
            raise ConfigError(f"{path.name}: {exc}") from exc
        record = simulate_well(spec)
        filename = f"{spec.well_id}.csv"
        write_well_csv(record, out / filename)
        entries.append({
            "well_id": spec.well_id,
            "field_id": spec.field_id,
            "file": filename,
            "seconds": len(record),
            "seed": spec.seed,
        })
        print(f"simulated {spec.well_id} ({spec.field_id}): "
              f"{len(record)} s -> {filename}")
    _write_json({"wells": entries}, out / "manifest.json")
    print(f"wrote {len(entries)} wells to {out}")
    return 0


def cmd_prepare(args) -> int:
    records = _read_manifest_wells(Path(args.wells))
    assignment = _load_json(Path(args.assignment), "assignment JSON")
    if not isinstance(assignment, dict):
        raise ConfigError("assignment JSON must map well_id to role")
    split = assemble_split(
        records, assignment,
        include_validation_domains=args.include_validation_domains)
    save_split(split, args.out)
    samples = split.train + split.validation + split.test
    histogram = class_histogram(samples)
    for cls in sorted(histogram):
        print(f"class {cls}: {histogram[cls]}")
    print(f"total: {len(samples)} windows "
          f"({len(split.train)} train, {len(split.validation)} validation, "
          f"{len(split.test)} test; {split.n_domains} source domains)")
    return 0


def cmd_train(args) -> int:
    split = load_split(args.split)
    config = TrainConfig.from_dict(_load_json(Path(args.config),
                                              "training config"))
    seed = args.seed if args.seed is not None else config.seeds[0]
    result = train(split, config, seed=seed)
    out = Path(args.out)
    _write_json({**config.to_dict(), "seed": seed}, out / "config.json")
    save_training_log(result.log, out / "training_log.csv")
    save_bundle(result.bundle, out / "checkpoint")
    print(f"trained {config.kind}: best epoch {result.best_epoch}, "
          f"validation mse {result.best_val_mse:.6f}")
    print(f"run directory: {out}")
    return 0


def cmd_gridsearch(args) -> int:
    records = _read_manifest_wells(Path(args.wells))
    base = TrainConfig.from_dict(_load_json(Path(args.config),
                                            "training config"))
    raw_grid = _load_json(Path(args.grid), "grid JSON")
    known = set(GridSpec.__dataclass_fields__)
    unknown = set(raw_grid) - known
    if unknown:
        raise ConfigError(f"unknown grid fields: {sorted(unknown)}")
    if "validation_cases" in raw_grid:
        raw_grid["validation_cases"] = tuple(raw_grid["validation_cases"])
    for axis in ("regularization_values", "hidden_layer_values",
                 "lambda_values", "alpha_values"):
        if axis in raw_grid:
            raw_grid[axis] = tuple(raw_grid[axis])
    grid = GridSpec(**raw_grid)
    stage = STAGE_ALIASES.get(args.stage)
    if stage is None:
        raise ConfigError(f"unknown stage {args.stage!r}; use reg or arch")
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    if args.workers > 1:
        warnings.warn("parallel grid workers are not implemented; "
                      "running sequentially")
    result = grid_search(records, grid, base, stage=stage)
    out = Path(args.out)
    _write_json({**base.to_dict(), "stage": stage}, out / "config.json")
    save_grid_results(result, out / "grid_results.csv")
    if result.argmin_cell is None:
        print("grid search finished: every cell failed")
        return 0
    recommended = _cell_config(base, stage, result.argmin_cell)
    _write_json(recommended.to_dict(), out / "recommended.json")
    axis_name = ("regularization" if stage == "regularization"
                 else "hidden_layer_count")
    print(f"best cell: {axis_name}={result.argmin_cell[0]}, "
          f"coefficient={result.argmin_cell[1]} "
          f"(mean validation mse {result.cell_means[result.argmin_cell]:.6f})")
    print(f"run directory: {out}")
    return 0


def _write_predictions(series: dict, bundle, out_path: Path) -> dict:
    """predictions.csv rows plus per-well arrays for the report."""
    out_path.parent.mkdir(parents=True, exist_ok=True)
    per_well = {}
    with out_path.open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTION_COLUMNS)
        for wid in sorted(series):
            x, y, classes, t_starts = series[wid]
            pred = predict_ssi(bundle, x)
            pred_cls = predicted_classes(pred)
            for i in range(len(y)):
                writer.writerow([
                    wid, t_starts[i], _format_value(float(y[i])),
                    _format_value(float(pred[i])), classes[i], pred_cls[i],
                ])
            per_well[wid] = (t_starts, y, pred, classes, pred_cls)
    return per_well


def cmd_evaluate(args) -> int:
    bundle = load_bundle(args.checkpoint)
    split = load_split(args.split)
    if not split.test:
        raise InsufficientDataError("split has no test windows to evaluate")
    by_well: dict = {}
    for s in split.test:
        by_well.setdefault(s.well_id, []).append(s)
    series = {}
    for wid, rows in by_well.items():
        rows = sorted(rows, key=lambda s: s.t_start)
        x = np.stack([s.features for s in rows])
        y = np.array([s.ssi for s in rows])
        classes = [s.severity_class for s in rows]
        t_starts = [s.t_start for s in rows]
        series[wid] = (x, y, classes, t_starts)

    out = Path(args.out)
    per_well = _write_predictions(series, bundle, out / "predictions.csv")

    wells_report = {}
    all_true: list = []
    all_pred: list = []
    for wid in sorted(per_well):
        _, y, pred, classes, pred_cls = per_well[wid]
        counts, _ = confusion_matrix(classes, pred_cls)
        wells_report[wid] = {
            "mse": float(np.mean((pred - y) ** 2)),
            "ndtw": normalized_dtw(y, pred),
            "confusion": counts.tolist(),
            "severe_recall": severe_recall(classes, pred_cls),
        }
        all_true.extend(classes)
        all_pred.extend(pred_cls)
    counts, rates = confusion_matrix(all_true, all_pred)
    report = {
        "wells": wells_report,
        "overall": {
            "mean_ndtw": float(np.mean([w["ndtw"]
                                        for w in wells_report.values()])),
            "confusion": counts.tolist(),
            "confusion_rates": rates.tolist(),
            "severe_recall": severe_recall(all_true, all_pred),
            "n_windows": len(all_true),
        },
    }
    _write_json(report, out / "eval_report.json")
    for wid in sorted(wells_report):
        print(f"{wid}: ndtw {wells_report[wid]['ndtw']:.4f}, "
              f"mse {wells_report[wid]['mse']:.4f}")
    print(f"mean ndtw: {report['overall']['mean_ndtw']:.4f}")
    return 0


def cmd_transfer(args) -> int:
    split = load_split(args.split)
    if not split.test:
        raise InsufficientDataError("split has no test wells to adapt to")
    bundles = {}
    for ckpt in args.checkpoint:
        bundle = load_bundle(ckpt)
        if bundle.kind in bundles:
            raise ConfigError(f"duplicate checkpoint kind {bundle.kind!r}")
        bundles[bundle.kind] = bundle
    rows = transfer_report(bundles, split.test, fraction=args.fraction,
                           epochs_ft=args.epochs_ft,
                           learning_rate=args.learning_rate)
    out = Path(args.out)
    save_transfer_report(rows, out / "transfer_report.csv")
    for row in rows:
        print(f"{row['well']} {row['kind']}: dtw {row['dtw_pre']:.4f} -> "
              f"{row['dtw_post']:.4f} ({row['improvement_pct']:+.2f}%)")
    print(f"run directory: {out}")
    return 0


def _read_predictions(path: Path) -> dict:
    if not path.is_file():
        raise ConfigError(f"expected predictions at {path}")
    per_well: dict = {}
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(PREDICTION_COLUMNS):
            raise ConfigError(f"{path}: unexpected columns {reader.fieldnames}")
        for row in reader:
            per_well.setdefault(row["well"], []).append(
                (int(row["t_start"]), float(row["true_ssi"]),
                 float(row["pred_ssi"])))
    return per_well


def cmd_report(args) -> int:
    run = Path(args.run)
    per_well = _read_predictions(run / "predictions.csv")
    eval_path = run / "eval_report.json"
    eval_report = _load_json(eval_path, "evaluation report")

    charts_dir = run / "charts"
    chart_files = []
    for wid in sorted(per_well):
        rows = sorted(per_well[wid])
        t = np.array([r[0] for r in rows], dtype=np.float64)
        true_ssi = np.array([r[1] for r in rows])
        pred_ssi = np.array([r[2] for r in rows])
        svg = line_chart(
            {"true": (t, true_ssi), "predicted": (t, pred_ssi)},
            title=f"SSI over time: {wid}", x_label="window start [s]",
            y_label="SSI")
        name = f"series_{wid}.svg"
        save_svg(svg, charts_dir / name)
        chart_files.append(f"charts/{name}")

    grid_path = run / "grid_results.csv"
    if grid_path.is_file():
        labels, means = [], []
        with grid_path.open("r", encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                if row["scope"] == "cell" and row["status"] == "ok":
                    axis = row["regularization"] or row["hidden_layer_count"]
                    coeff = row["coefficient"]
                    label = axis if coeff in ("", "None") else f"{axis}/{coeff}"
                    labels.append(label)
                    means.append(float(row["val_mse"]))
        if labels:
            svg = bar_chart(labels, {"validation mse": means},
                            title="Grid cell means", x_label="cell",
                            y_label="validation mse")
            save_svg(svg, charts_dir / "grid_means.svg")
            chart_files.append("charts/grid_means.svg")

    report = {"charts": chart_files, "evaluation": eval_report}
    _write_json(report, run / "report.json")
    print(f"wrote {len(chart_files)} charts and report.json under {run}")
    return 0


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stickslip",
        description="Stick-slip severity prediction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render well specs to 1 Hz records")
    p.add_argument("--spec-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("prepare", help="window wells into a dataset split")
    p.add_argument("--wells", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--include-validation-domains", action="store_true")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one model on a split")
    p.add_argument("--split", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gridsearch", help="sweep one grid stage")
    p.add_argument("--wells", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--stage", required=True,
                   help="reg (regularization) or arch (architecture)")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("evaluate", help="score a checkpoint on test wells")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("transfer", help="fine-tune checkpoints per test well")
    p.add_argument("--checkpoint", required=True, action="append",
                   help="checkpoint directory; repeat per kind")
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fraction", type=float, default=0.10)
    p.add_argument("--epochs-ft", type=int, default=20)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("report", help="render charts for a finished run")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except StickSlipError as exc:       # safety net for future subclasses
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
