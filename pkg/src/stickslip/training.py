"""Training orchestration: single runs, the two-stage grid search, and the
final multi-seed comparison of the three objectives.

A run is deterministic given (config, seed): model initialization, batch
shuffling, and optimizer state all derive from fixed-seed generators, so
training the same config twice yields bit-identical checkpoints.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exceptions import (
    ConfigError, InsufficientDataError, StickSlipError, TrainingDiverged,
)
from .metrics import confusion_matrix, mse, normalized_dtw, severe_recall
from .models import GeneratorConfig, ModelBundle, build_bundle, predict_ssi
from .nn import Adam
from .objectives import LossBreakdown, adg_loss, erm_loss, irm_loss
from .windowing import DatasetSplit, bin_ssi, class_histogram

KINDS = ("baseline", "adg", "irm")
CHECKPOINT_POLICY = "best-validation-mse"

LOG_COLUMNS = ("epoch", "split", "total", "ssi_mse", "domain_ce",
               "irm_penalty", "l2")
GRID_COLUMNS = ("stage", "case", "regularization", "hidden_layer_count",
                "coefficient", "seed", "scope", "status", "val_mse", "val_ndtw")


@dataclass
class TrainConfig:
    """Hyperparameters of one training run.

    Exactly the coefficient matching ``kind`` must be set: ``grl_lambda``
    for adg, ``alpha`` for irm, neither for the baseline.  ``seeds``
    lists the initializations used by multi-seed drivers; ``train`` runs
    one seed at a time.
    """

    kind: str
    epochs: int = 150
    batch_size: int = 256
    learning_rate: float = 1e-3
    grl_lambda: Optional[float] = None
    alpha: Optional[float] = None
    hidden_layer_count: int = 6
    units: int = 64
    regularization_coefficient: float = 1e-4
    seeds: tuple = (0,)
    validation_fraction: float = 0.1
    checkpoint_policy: str = CHECKPOINT_POLICY

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}")
        if self.epochs <= 0:
            raise ConfigError(f"epochs must be > 0, got {self.epochs}")
        if self.batch_size <= 0:
            raise ConfigError(f"batch_size must be > 0, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.kind == "adg":
            if self.grl_lambda is None or self.grl_lambda < 0:
                raise ConfigError("adg requires grl_lambda >= 0")
            if self.alpha is not None:
                raise ConfigError("alpha is an irm coefficient; unset it for adg")
        elif self.kind == "irm":
            if self.alpha is None or self.alpha < 0:
                raise ConfigError("irm requires alpha >= 0")
            if self.grl_lambda is not None:
                raise ConfigError("grl_lambda is an adg coefficient; unset it for irm")
        else:
            if self.grl_lambda is not None or self.alpha is not None:
                raise ConfigError("baseline takes neither grl_lambda nor alpha")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must be in [0, 1)")
        if self.checkpoint_policy != CHECKPOINT_POLICY:
            raise ConfigError(f"unsupported checkpoint policy {self.checkpoint_policy!r}")
        self.generator_config().validate()

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            hidden_layer_count=self.hidden_layer_count,
            units=self.units,
            regularization_coefficient=self.regularization_coefficient,
        )

    def coefficient(self) -> Optional[float]:
        if self.kind == "adg":
            return self.grl_lambda
        if self.kind == "irm":
            return self.alpha
        return None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "grl_lambda": self.grl_lambda,
            "alpha": self.alpha,
            "hidden_layer_count": self.hidden_layer_count,
            "units": self.units,
            "regularization_coefficient": self.regularization_coefficient,
            "seeds": list(self.seeds),
            "validation_fraction": self.validation_fraction,
            "checkpoint_policy": self.checkpoint_policy,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
        if "kind" not in raw:
            raise ConfigError("train config needs a kind")
        data = dict(raw)
        if "seeds" in data:
            data["seeds"] = tuple(int(s) for s in data["seeds"])
        config = cls(**data)
        config.validate()
        return config


@dataclass
class TrainResult:
    bundle: ModelBundle          # snapshot with the lowest validation MSE
    log: list                    # dict rows, LOG_COLUMNS keys
    best_epoch: int
    best_val_mse: float
    seed: int
    config: TrainConfig
    n_train: int
    n_validation: int
    touched_wells: set = field(default_factory=set)


def samples_to_arrays(samples: Sequence):
    """Stack SequenceSamples into (X, y, domains) arrays."""
    if not samples:
        raise InsufficientDataError("no samples to stack")
    x = np.stack([s.features for s in samples])
    y = np.array([s.ssi for s in samples], dtype=np.float64)
    domains = np.array([s.domain_id for s in samples], dtype=np.int64)
    return x, y, domains


def carve_validation(train_samples: Sequence, fraction: float):
    """Per-well chronological tail split of the training samples.

    Each well contributes its last ``fraction`` of windows (at least one
    when it has two or more) to validation; the rest stay in training.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError("validation_fraction must be in (0, 1) to carve a holdout")
    by_well: dict = {}
    for s in train_samples:
        by_well.setdefault(s.well_id, []).append(s)
    keep, held = [], []
    for wid in sorted(by_well):
        rows = sorted(by_well[wid], key=lambda s: s.t_start)
        n = len(rows)
        n_val = int(math.floor(n * fraction))
        if n_val == 0 and n >= 2:
            n_val = 1
        if n_val == 0:
            keep.extend(rows)
        else:
            keep.extend(rows[:-n_val])
            held.extend(rows[-n_val:])
    if not held:
        raise InsufficientDataError(
            "validation carve produced no samples; provide validation wells"
        )
    if not keep:
        raise InsufficientDataError("validation carve consumed all training samples")
    return keep, held


def _stratified_order(domains: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Round-robin interleave of per-domain shuffled indices.

    Consecutive slices of the result then mix domains, so every
    mini-batch carries several domain labels.
    """
    groups = [rng.permutation(np.flatnonzero(domains == d))
              for d in np.unique(domains)]
    order = np.empty(domains.shape[0], dtype=np.int64)
    pos = 0
    cursors = [0] * len(groups)
    while pos < order.size:
        for gi, g in enumerate(groups):
            if cursors[gi] < g.size:
                order[pos] = g[cursors[gi]]
                cursors[gi] += 1
                pos += 1
    return order


def _domain_subbatches(groups: dict, cursors: dict, sub_size: int,
                       rng: np.random.Generator):
    """Advance every domain cursor by ``sub_size``, reshuffling exhausted
    domains so each step sees one equal-size sub-batch per domain."""
    batches = []
    for d in sorted(groups):
        idx = groups[d]
        start = cursors[d]
        if start + sub_size > idx.size:
            rng.shuffle(idx)
            start = 0
        cursors[d] = start + sub_size
        batches.append(idx[start:start + sub_size])
    return batches


def train(split: DatasetSplit, config: TrainConfig,
          seed: Optional[int] = None) -> TrainResult:
    """Run one seeded training loop and return the best-validation model.

    Validation samples come from ``split.validation`` when present,
    otherwise from a per-well chronological tail carve of the training
    wells.  The returned bundle is the epoch snapshot with the lowest
    validation MSE; the log holds one train row and one validation row
    per epoch.
    """
    config.validate()
    if seed is None:
        seed = config.seeds[0]
    seed = int(seed)
    if not split.train:
        raise InsufficientDataError("split has no training samples")

    if split.validation:
        train_samples = list(split.train)
        val_samples = list(split.validation)
    else:
        train_samples, val_samples = carve_validation(
            split.train, config.validation_fraction)

    x_train, y_train, domains = samples_to_arrays(train_samples)
    x_val, y_val, _ = samples_to_arrays(val_samples)

    n_domains = split.n_domains
    if config.kind in ("adg", "irm"):
        if np.any(domains < 0):
            raise ConfigError(
                f"{config.kind} training needs source-domain labels on every "
                "training sample"
            )
        if n_domains < 2:
            warnings.warn(f"{config.kind} training with fewer than 2 source domains")

    bundle = build_bundle(
        config.kind,
        config.generator_config(),
        n_domains=n_domains if config.kind == "adg" else None,
        seed=seed,
    )
    params = [p for pset in bundle.parameter_sets() for p in pset]
    opt = Adam(params, lr=config.learning_rate)
    shuffle_rng = np.random.default_rng([seed, 1])

    n = x_train.shape[0]
    batch_size = min(config.batch_size, n)
    steps_per_epoch = max(1, math.ceil(n / batch_size))
    if config.kind == "irm":
        groups = {int(d): np.flatnonzero(domains == d) for d in np.unique(domains)}
        sub_size = max(1, batch_size // max(1, len(groups)))
        cursors = {d: g.size for d, g in groups.items()}   # force initial shuffle

    log: list = []
    best_val = math.inf
    best_epoch = -1
    best_bundle: Optional[ModelBundle] = None

    for epoch in range(1, config.epochs + 1):
        sums = {"total": 0.0, "ssi_mse": 0.0, "domain_ce": 0.0,
                "irm_penalty": 0.0, "l2": 0.0}
        has_ce = config.kind == "adg"
        has_pen = config.kind == "irm"

        if config.kind == "adg":
            order = _stratified_order(domains, shuffle_rng)
        elif config.kind == "baseline":
            order = shuffle_rng.permutation(n)

        for step in range(steps_per_epoch):
            if config.kind == "irm":
                idx_groups = _domain_subbatches(groups, cursors, sub_size, shuffle_rng)
                domain_batches = [(x_train[idx], y_train[idx]) for idx in idx_groups]
                total, br = irm_loss(bundle, domain_batches, config.alpha)
            else:
                idx = order[step * batch_size:(step + 1) * batch_size]
                if idx.size == 0:
                    continue
                if config.kind == "adg":
                    total, br = adg_loss(bundle, x_train[idx], y_train[idx],
                                         domains[idx], config.grl_lambda)
                else:
                    total, br = erm_loss(bundle, x_train[idx], y_train[idx])
            if not math.isfinite(br.total):
                raise TrainingDiverged(epoch, step)
            total.backward()
            opt.step()
            opt.zero_grad()
            sums["total"] += br.total
            sums["ssi_mse"] += br.ssi_mse
            sums["l2"] += br.l2
            if has_ce:
                sums["domain_ce"] += br.domain_ce
            if has_pen:
                sums["irm_penalty"] += br.irm_penalty

        k = float(steps_per_epoch)
        log.append({
            "epoch": epoch, "split": "train",
            "total": sums["total"] / k, "ssi_mse": sums["ssi_mse"] / k,
            "domain_ce": sums["domain_ce"] / k if has_ce else None,
            "irm_penalty": sums["irm_penalty"] / k if has_pen else None,
            "l2": sums["l2"] / k,
        })

        val_pred = predict_ssi(bundle, x_val)
        val_mse = mse(y_val, val_pred)
        if not math.isfinite(val_mse):
            raise TrainingDiverged(epoch, steps_per_epoch)
        log.append({
            "epoch": epoch, "split": "validation",
            "total": val_mse, "ssi_mse": val_mse,
            "domain_ce": None, "irm_penalty": None, "l2": None,
        })
        if val_mse < best_val:
            best_val = val_mse
            best_epoch = epoch
            best_bundle = bundle.copy()

    assert best_bundle is not None
    return TrainResult(
        bundle=best_bundle,
        log=log,
        best_epoch=best_epoch,
        best_val_mse=best_val,
        seed=seed,
        config=config,
        n_train=len(train_samples),
        n_validation=len(val_samples),
        touched_wells={s.well_id for s in train_samples}
                      | {s.well_id for s in val_samples},
    )


def _format_value(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def save_training_log(log: Sequence[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for row in log:
            writer.writerow([_format_value(row[c]) for c in LOG_COLUMNS])


def predicted_classes(pred_ssi: np.ndarray) -> list:
    """Severity classes from predictions; negatives clamp to 0 first."""
    return [bin_ssi(max(0.0, float(p))) for p in np.asarray(pred_ssi)]


def well_series(samples: Sequence) -> dict:
    """Group samples per well in chronological order.

    Returns ``{well_id: (features, true_ssi, true_classes)}`` with
    features stacked (N, 60, 5) and series ordered by window start.
    """
    by_well: dict = {}
    for s in samples:
        by_well.setdefault(s.well_id, []).append(s)
    out = {}
    for wid in sorted(by_well):
        rows = sorted(by_well[wid], key=lambda s: s.t_start)
        feats = np.stack([s.features for s in rows])
        ssi = np.array([s.ssi for s in rows], dtype=np.float64)
        classes = [s.severity_class for s in rows]
        out[wid] = (feats, ssi, classes)
    return out


def evaluate_on_wells(bundle: ModelBundle, samples: Sequence) -> dict:
    """Per-well normalized DTW plus pooled class labels.

    Returns a dict with ``ndtw`` (well -> value), ``true_classes``,
    ``pred_classes`` (pooled over wells in sorted-well order) and
    ``mse`` over all samples.
    """
    series = well_series(samples)
    if not series:
        raise InsufficientDataError("no samples to evaluate")
    ndtw = {}
    true_classes: list = []
    pred_classes: list = []
    true_all: list = []
    pred_all: list = []
    for wid, (feats, true_ssi, classes) in series.items():
        pred = predict_ssi(bundle, feats)
        ndtw[wid] = normalized_dtw(true_ssi, pred)
        true_classes.extend(classes)
        pred_classes.extend(predicted_classes(pred))
        true_all.append(true_ssi)
        pred_all.append(pred)
    true_cat = np.concatenate(true_all)
    pred_cat = np.concatenate(pred_all)
    return {
        "ndtw": ndtw,
        "true_classes": true_classes,
        "pred_classes": pred_classes,
        "mse": mse(true_cat, pred_cat),
    }


@dataclass
class GridSpec:
    """Axes of the hyperparameter search.

    ``validation_cases`` rotates well-role assignments; every case is a
    full well_id -> role map whose validation wells score the cells.
    """

    regularization_values: tuple = (1e-3, 1e-4, 1e-5)
    hidden_layer_values: tuple = (4, 6, 8)
    lambda_values: tuple = (1.0, 10.0, 100.0, 1000.0)
    alpha_values: tuple = (0.01, 0.1, 1.0, 10.0, 1000.0)
    validation_cases: tuple = ()
    seeds_per_cell: int = 3

    def validate(self, kind: str) -> None:
        if not self.validation_cases:
            raise ConfigError("grid needs at least one validation case")
        if self.seeds_per_cell < 1:
            raise ConfigError("seeds_per_cell must be >= 1")
        if not self.regularization_values or not self.hidden_layer_values:
            raise ConfigError("grid axes must be non-empty")
        if kind == "adg" and not self.lambda_values:
            raise ConfigError("adg grid needs lambda_values")
        if kind == "irm" and not self.alpha_values:
            raise ConfigError("irm grid needs alpha_values")

    def coefficient_values(self, kind: str) -> tuple:
        if kind == "adg":
            return tuple(self.lambda_values)
        if kind == "irm":
            return tuple(self.alpha_values)
        return (None,)


STAGES = ("regularization", "architecture")


@dataclass
class GridResult:
    stage: str
    rows: list                   # per-run dict rows, GRID_COLUMNS keys
    cell_means: dict             # cell tuple -> mean val_mse or None
    cell_ndtw: dict              # cell tuple -> mean val_ndtw or None
    argmin_cell: Optional[tuple]
    touched_wells: set = field(default_factory=set)


def _cell_config(base: TrainConfig, stage: str, cell: tuple) -> TrainConfig:
    reg_or_h, coeff = cell
    updates: dict = {}
    if stage == "regularization":
        updates["regularization_coefficient"] = reg_or_h
    else:
        updates["hidden_layer_count"] = reg_or_h
    if base.kind == "adg":
        updates["grl_lambda"] = coeff
    elif base.kind == "irm":
        updates["alpha"] = coeff
    return replace(base, **updates)


def grid_search(wells, grid: GridSpec, base_config: TrainConfig,
                stage: str = "regularization") -> GridResult:
    """Sweep one stage of the search over every validation case.

    Stage ``regularization`` crosses regularization values with the
    kind's coefficient at the base architecture; stage ``architecture``
    crosses hidden-layer counts with the coefficient at the base
    regularization.  Each (case, cell) trains ``seeds_per_cell`` seeds;
    any failed run marks the whole cell failed rather than shrinking its
    mean.  Test wells in the case assignments are never trained on or
    evaluated.
    """
    if stage not in STAGES:
        raise ConfigError(f"unknown grid stage {stage!r}")
    base_config.validate()
    grid.validate(base_config.kind)
    from .windowing import assemble_split   # local import, cycle-free

    if stage == "regularization":
        axis = tuple(grid.regularization_values)
    else:
        axis = tuple(grid.hidden_layer_values)
    cells = [(a, c) for a in axis
             for c in grid.coefficient_values(base_config.kind)]
    seeds = tuple(range(grid.seeds_per_cell))

    rows: list = []
    per_cell_case: dict = {cell: {} for cell in cells}
    touched: set = set()

    for case_idx, assignment in enumerate(grid.validation_cases):
        try:
            split = assemble_split(wells, assignment)
        except StickSlipError as exc:
            for cell in cells:
                rows.append(_grid_row(stage, case_idx, base_config.kind, cell,
                                      None, "run", f"error: {exc}", None, None))
                per_cell_case[cell][case_idx] = None
            continue
        if not split.validation:
            for cell in cells:
                rows.append(_grid_row(stage, case_idx, base_config.kind, cell,
                                      None, "run", "error: case has no validation wells",
                                      None, None))
                per_cell_case[cell][case_idx] = None
            continue
        for cell in cells:
            config = _cell_config(base_config, stage, cell)
            run_mse: list = []
            run_ndtw: list = []
            failed = False
            for seed in seeds:
                try:
                    result = train(split, config, seed=seed)
                    scored = evaluate_on_wells(result.bundle, split.validation)
                except StickSlipError as exc:
                    rows.append(_grid_row(stage, case_idx, config.kind, cell,
                                          seed, "run", f"failed: {exc}", None, None))
                    failed = True
                    continue
                touched |= result.touched_wells
                touched |= {s.well_id for s in split.validation}
                val_ndtw = float(np.mean(list(scored["ndtw"].values())))
                rows.append(_grid_row(stage, case_idx, config.kind, cell,
                                      seed, "run", "ok", scored["mse"], val_ndtw))
                run_mse.append(scored["mse"])
                run_ndtw.append(val_ndtw)
            if failed:
                per_cell_case[cell][case_idx] = None
                rows.append(_grid_row(stage, case_idx, config.kind, cell,
                                      None, "cell-case", "failed", None, None))
            else:
                mean_mse = float(np.mean(run_mse))
                mean_ndtw = float(np.mean(run_ndtw))
                per_cell_case[cell][case_idx] = (mean_mse, mean_ndtw)
                rows.append(_grid_row(stage, case_idx, config.kind, cell,
                                      None, "cell-case", "ok", mean_mse, mean_ndtw))

    cell_means: dict = {}
    cell_ndtw: dict = {}
    for cell in cells:
        per_case = per_cell_case[cell]
        if any(v is None for v in per_case.values()):
            cell_means[cell] = None
            cell_ndtw[cell] = None
            rows.append(_grid_row(stage, None, base_config.kind, cell,
                                  None, "cell", "failed", None, None))
        else:
            cell_means[cell] = float(np.mean([v[0] for v in per_case.values()]))
            cell_ndtw[cell] = float(np.mean([v[1] for v in per_case.values()]))
            rows.append(_grid_row(stage, None, base_config.kind, cell,
                                  None, "cell", "ok", cell_means[cell],
                                  cell_ndtw[cell]))

    valid = {cell: m for cell, m in cell_means.items() if m is not None}
    argmin_cell = min(valid, key=valid.get) if valid else None
    if argmin_cell is not None:
        rows.append(_grid_row(stage, None, base_config.kind, argmin_cell,
                              None, "argmin", "ok", cell_means[argmin_cell],
                              cell_ndtw[argmin_cell]))
    return GridResult(stage=stage, rows=rows, cell_means=cell_means,
                      cell_ndtw=cell_ndtw, argmin_cell=argmin_cell,
                      touched_wells=touched)


def _grid_row(stage, case_idx, kind, cell, seed, scope, status, val_mse, val_ndtw):
    reg_or_h, coeff = cell
    return {
        "stage": stage,
        "case": case_idx,
        "regularization": reg_or_h if stage == "regularization" else None,
        "hidden_layer_count": reg_or_h if stage == "architecture" else None,
        "coefficient": coeff,
        "seed": seed,
        "scope": scope,
        "status": status,
        "val_mse": val_mse,
        "val_ndtw": val_ndtw,
    }


@dataclass
class TwoStageResult:
    first: GridResult
    second: GridResult
    recommended: TrainConfig


def two_stage_grid_search(wells, grid: GridSpec,
                          base_config: TrainConfig) -> TwoStageResult:
    """Regularization sweep, then architecture sweep at the winning
    regularization; the coefficient axis rides along in both stages."""
    first = grid_search(wells, grid, base_config, stage="regularization")
    if first.argmin_cell is None:
        raise TrainingDiverged(0, 0, "every regularization-stage cell failed")
    best_reg, best_coeff = first.argmin_cell
    mid = _cell_config(base_config, "regularization", (best_reg, best_coeff))
    second = grid_search(wells, grid, mid, stage="architecture")
    if second.argmin_cell is None:
        raise TrainingDiverged(0, 0, "every architecture-stage cell failed")
    best_h, final_coeff = second.argmin_cell
    recommended = _cell_config(mid, "architecture", (best_h, final_coeff))
    return TwoStageResult(first=first, second=second, recommended=recommended)


def save_grid_results(results, path) -> None:
    """Write one or more GridResults into a single grid_results.csv."""
    if isinstance(results, GridResult):
        results = [results]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GRID_COLUMNS)
        for result in results:
            for row in result.rows:
                writer.writerow([_format_value(row[c]) for c in GRID_COLUMNS])


@dataclass
class EvalReport:
    per_well_ndtw: dict          # kind -> {well -> mean over seeds}
    improvement_pct: dict        # kind -> {well -> %, "mean" -> %}
    confusion_counts: dict       # kind -> 4x4 list of lists, pooled over seeds
    confusion_rates: dict        # kind -> 4x4 list of lists
    severe_recall: dict          # kind -> {"per_seed": [...], "mean": float|None}
    val_mse: dict                # kind -> {"per_seed": [...], "mean": float}
    seeds: tuple
    n_test_windows: int
    test_class_histogram: dict
    configs: dict                # kind -> config dict

    def to_dict(self) -> dict:
        return {
            "per_well_ndtw": self.per_well_ndtw,
            "improvement_pct": self.improvement_pct,
            "confusion_counts": self.confusion_counts,
            "confusion_rates": self.confusion_rates,
            "severe_recall": self.severe_recall,
            "val_mse": self.val_mse,
            "seeds": list(self.seeds),
            "n_test_windows": self.n_test_windows,
            "test_class_histogram": {str(k): v for k, v in
                                     self.test_class_histogram.items()},
            "configs": self.configs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def improvement_percent(reference: float, candidate: float) -> float:
    """Relative improvement of ``candidate`` over ``reference`` in percent."""
    if reference == 0.0:
        raise ConfigError("improvement undefined for a zero reference")
    return (reference - candidate) / reference * 100.0


def compare_final(split: DatasetSplit, configs: dict,
                  seeds: Sequence[int] = (0, 1, 2)) -> EvalReport:
    """Train every configured kind across seeds and evaluate on test wells.

    All kinds share the generator architecture, so per seed they start
    from bit-identical generator weights; per-well normalized DTW is
    averaged across seeds and improvement percentages are taken against
    the baseline when present.
    """
    if not configs:
        raise ConfigError("compare_final needs at least one kind config")
    for kind, config in configs.items():
        if kind != config.kind:
            raise ConfigError(f"config under key {kind!r} has kind {config.kind!r}")
        config.validate()
    shapes = {(c.hidden_layer_count, c.units) for c in configs.values()}
    if len(shapes) > 1:
        raise ConfigError(
            "compare_final requires one shared generator architecture, "
            f"got {sorted(shapes)}"
        )
    if not split.test:
        raise InsufficientDataError("split has no test samples")
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ConfigError("compare_final needs at least one seed")

    kinds = sorted(configs)
    ndtw_acc: dict = {k: {} for k in kinds}
    true_acc: dict = {k: [] for k in kinds}
    pred_acc: dict = {k: [] for k in kinds}
    recall_acc: dict = {k: [] for k in kinds}
    val_acc: dict = {k: [] for k in kinds}

    for seed in seeds:
        for kind in kinds:
            result = train(split, configs[kind], seed=seed)
            scored = evaluate_on_wells(result.bundle, split.test)
            for wid, value in scored["ndtw"].items():
                ndtw_acc[kind].setdefault(wid, []).append(value)
            true_acc[kind].extend(scored["true_classes"])
            pred_acc[kind].extend(scored["pred_classes"])
            recall_acc[kind].append(
                severe_recall(scored["true_classes"], scored["pred_classes"]))
            val_acc[kind].append(result.best_val_mse)

    per_well = {
        kind: {wid: float(np.mean(vals)) for wid, vals in sorted(wells.items())}
        for kind, wells in ndtw_acc.items()
    }
    improvement: dict = {}
    if "baseline" in per_well:
        base = per_well["baseline"]
        for kind in kinds:
            if kind == "baseline":
                continue
            rows = {wid: improvement_percent(base[wid], per_well[kind][wid])
                    for wid in base}
            rows["mean"] = improvement_percent(
                float(np.mean(list(base.values()))),
                float(np.mean(list(per_well[kind].values()))),
            )
            improvement[kind] = rows

    confusion_counts = {}
    confusion_rates = {}
    recall_out = {}
    val_out = {}
    for kind in kinds:
        counts, rates = confusion_matrix(true_acc[kind], pred_acc[kind])
        confusion_counts[kind] = counts.tolist()
        confusion_rates[kind] = rates.tolist()
        per_seed = recall_acc[kind]
        known = [r for r in per_seed if r is not None]
        recall_out[kind] = {
            "per_seed": per_seed,
            "mean": float(np.mean(known)) if known else None,
        }
        val_out[kind] = {
            "per_seed": val_acc[kind],
            "mean": float(np.mean(val_acc[kind])),
        }

    return EvalReport(
        per_well_ndtw=per_well,
        improvement_pct=improvement,
        confusion_counts=confusion_counts,
        confusion_rates=confusion_rates,
        severe_recall=recall_out,
        val_mse=val_out,
        seeds=seeds,
        n_test_windows=len(split.test),
        test_class_histogram=class_histogram(split.test),
        configs={k: c.to_dict() for k, c in configs.items()},
    )
