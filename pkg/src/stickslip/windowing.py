"""Windowing, labeling, normalization, and split assembly.

Well records are cut into non-overlapping 60 s windows.  Each window's
five surface channels become one z-scored feature matrix; the matching
downhole window yields the stick-slip index label

    ssi = (max(bit_speed) - min(bit_speed)) / mean(bit_speed)

and its severity class.  Normalization statistics are always fitted on
training wells only.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, FieldStraddleError, ShapeError, StickSlipError
from .simulate import SURFACE_CHANNELS, WellRecord

WINDOW_S = 60
N_CHANNELS = len(SURFACE_CHANNELS)
MEAN_SPEED_TOLERANCE = 1e-9
CLASS_EDGES = (0.3, 0.5, 0.7)

ROLES = ("train", "validation", "test")


class UndefinedSSIError(StickSlipError):
    """Window mean bit speed too small for the index to be defined."""


def compute_ssi(bit_speed_window) -> float:
    """Stick-slip index of one 60-sample downhole window."""
    w = np.asarray(bit_speed_window, dtype=np.float64)
    if w.shape != (WINDOW_S,):
        raise ShapeError(f"expected a ({WINDOW_S},) window, got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ShapeError("bit speed window contains non-finite values")
    mean = w.mean()
    if mean <= MEAN_SPEED_TOLERANCE:
        raise UndefinedSSIError(f"window mean bit speed {mean:g} is not positive")
    return float((w.max() - w.min()) / mean)


def bin_ssi(ssi: float) -> int:
    """Severity class 1-4; each boundary belongs to the upper class."""
    if not np.isfinite(ssi) or ssi < 0:
        raise ConfigError(f"ssi must be finite and >= 0, got {ssi}")
    for cls, edge in enumerate(CLASS_EDGES, start=1):
        if ssi < edge:
            return cls
    return len(CLASS_EDGES) + 1


@dataclass
class SequenceSample:
    """One labeled 60 s input window."""

    features: np.ndarray        # (60, 5) normalized surface channels
    ssi: float
    severity_class: int
    domain_id: int              # -1 when the well is not a source domain
    well_id: str
    t_start: int                # seconds from the start of the record


@dataclass
class NormalizationStats:
    mean: np.ndarray            # (5,)
    std: np.ndarray             # (5,)
    fitted_on: list

    @classmethod
    def fit(cls, records) -> "NormalizationStats":
        records = list(records)
        if not records:
            raise ConfigError("cannot fit normalization stats on zero wells")
        mean = np.empty(N_CHANNELS)
        std = np.empty(N_CHANNELS)
        for i, name in enumerate(SURFACE_CHANNELS):
            stacked = np.concatenate([r.channel_arrays()[name] for r in records])
            mean[i] = stacked.mean()
            s = stacked.std()
            std[i] = s if s > 1e-12 else 1.0
        return cls(mean=mean, std=std, fitted_on=[r.well_id for r in records])

    def apply(self, record: WellRecord) -> np.ndarray:
        """Stack and z-score the five surface channels, shape (L, 5)."""
        raw = np.stack([record.channel_arrays()[n] for n in SURFACE_CHANNELS], axis=1)
        return (raw - self.mean) / self.std

    def invert(self, features: np.ndarray) -> np.ndarray:
        return features * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean],
                "std": [float(v) for v in self.std],
                "fitted_on": list(self.fitted_on)}

    @classmethod
    def from_dict(cls, raw: dict) -> "NormalizationStats":
        mean = np.asarray(raw["mean"], dtype=np.float64)
        std = np.asarray(raw["std"], dtype=np.float64)
        if mean.shape != (N_CHANNELS,) or std.shape != (N_CHANNELS,):
            raise ConfigError("normalization stats must cover exactly 5 channels")
        return cls(mean=mean, std=std, fitted_on=list(raw.get("fitted_on", [])))


@dataclass
class WindowedWell:
    samples: list
    dropped: int                # windows with undefined SSI
    too_short: bool             # record shorter than one window


def window_well(record: WellRecord, stats: NormalizationStats,
                domain_id: int = -1) -> WindowedWell:
    """Cut one record into labeled samples; see module docstring."""
    n_windows = len(record) // WINDOW_S
    if n_windows == 0:
        warnings.warn(f"well {record.well_id}: record shorter than one window")
        return WindowedWell(samples=[], dropped=0, too_short=True)
    normalized = stats.apply(record)
    bit = record.bit_speed
    samples = []
    dropped = 0
    for w in range(n_windows):
        lo = w * WINDOW_S
        hi = lo + WINDOW_S
        try:
            ssi = compute_ssi(bit[lo:hi])
        except UndefinedSSIError:
            dropped += 1
            continue
        samples.append(SequenceSample(
            features=np.ascontiguousarray(normalized[lo:hi]),
            ssi=ssi,
            severity_class=bin_ssi(ssi),
            domain_id=domain_id,
            well_id=record.well_id,
            t_start=lo,
        ))
    return WindowedWell(samples=samples, dropped=dropped, too_short=False)


@dataclass
class DatasetSplit:
    train: list
    validation: list
    test: list
    n_domains: int
    stats: NormalizationStats
    domain_map: dict            # well_id -> domain_id for source wells
    assignment: dict            # well_id -> role
    field_map: dict             # well_id -> field_id
    dropped: dict = field(default_factory=dict)   # well_id -> dropped count


def assemble_split(wells, assignment: dict,
                   include_validation_domains: bool = False) -> DatasetSplit:
    """Window all wells and assemble a domain-tagged split.

    ``assignment`` maps every well_id to one of train/validation/test.
    Normalization statistics come from training wells only.  Source
    domains are the training wells (plus validation wells when
    ``include_validation_domains`` is set), numbered densely in sorted
    well_id order.
    """
    wells = list(wells)
    by_id = {}
    for rec in wells:
        if rec.well_id in by_id:
            raise ConfigError(f"duplicate well_id {rec.well_id!r}")
        by_id[rec.well_id] = rec
    missing = set(by_id) - set(assignment)
    if missing:
        raise ConfigError(f"assignment missing wells: {sorted(missing)}")
    unknown = set(assignment) - set(by_id)
    if unknown:
        raise ConfigError(f"assignment names unknown wells: {sorted(unknown)}")
    for wid, role in assignment.items():
        if role not in ROLES:
            raise ConfigError(f"well {wid!r}: unknown role {role!r}")

    train_ids = sorted(w for w, r in assignment.items() if r == "train")
    val_ids = sorted(w for w, r in assignment.items() if r == "validation")
    test_ids = sorted(w for w, r in assignment.items() if r == "test")
    if not train_ids:
        raise ConfigError("assignment defines no training wells")

    source_fields = {by_id[w].field_id for w in train_ids + val_ids}
    for wid in test_ids:
        fid = by_id[wid].field_id
        if fid in source_fields:
            raise FieldStraddleError(
                f"field {fid!r} contributes wells to both sides of the split"
            )

    stats = NormalizationStats.fit([by_id[w] for w in train_ids])

    domain_ids = train_ids + val_ids if include_validation_domains else train_ids
    domain_map = {wid: i for i, wid in enumerate(sorted(domain_ids))}

    buckets = {"train": [], "validation": [], "test": []}
    dropped = {}
    for wid, role in sorted(assignment.items()):
        rec = by_id[wid]
        windowed = window_well(rec, stats, domain_id=domain_map.get(wid, -1))
        buckets[role].extend(windowed.samples)
        if windowed.dropped:
            dropped[wid] = windowed.dropped

    return DatasetSplit(
        train=buckets["train"],
        validation=buckets["validation"],
        test=buckets["test"],
        n_domains=len(domain_map),
        stats=stats,
        domain_map=domain_map,
        assignment=dict(sorted(assignment.items())),
        field_map={wid: by_id[wid].field_id for wid in sorted(by_id)},
        dropped=dropped,
    )


def _format_value(x: float) -> str:
    return repr(float(x))


def save_split(split: DatasetSplit, directory) -> None:
    """Persist a split as split.json plus one samples CSV per well."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    head = {
        "assignment": split.assignment,
        "field_map": split.field_map,
        "domain_map": split.domain_map,
        "n_domains": split.n_domains,
        "stats": split.stats.to_dict(),
        "dropped": split.dropped,
        "wells": sorted({s.well_id for bucket in (split.train, split.validation, split.test)
                         for s in bucket}),
    }
    (directory / "split.json").write_text(
        json.dumps(head, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    by_well = {}
    for bucket in (split.train, split.validation, split.test):
        for s in bucket:
            by_well.setdefault(s.well_id, []).append(s)
    feature_cols = [f"f{i:03d}" for i in range(WINDOW_S * N_CHANNELS)]
    header = feature_cols + ["ssi", "severity_class", "domain_id", "t_start"]
    for wid, samples in sorted(by_well.items()):
        samples = sorted(samples, key=lambda s: s.t_start)
        path = directory / f"samples_{wid}.csv"
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for s in samples:
                row = [_format_value(v) for v in s.features.reshape(-1)]
                row += [_format_value(s.ssi), str(s.severity_class),
                        str(s.domain_id), str(s.t_start)]
                writer.writerow(row)


def load_split(directory) -> DatasetSplit:
    directory = Path(directory)
    head_path = directory / "split.json"
    if not head_path.is_file():
        raise ConfigError(f"no split at {head_path}")
    head = json.loads(head_path.read_text(encoding="utf-8"))
    stats = NormalizationStats.from_dict(head["stats"])
    assignment = head["assignment"]
    buckets = {"train": [], "validation": [], "test": []}
    n_feat = WINDOW_S * N_CHANNELS
    for wid in head["wells"]:
        role = assignment.get(wid)
        if role not in ROLES:
            raise ConfigError(f"split.json: well {wid!r} has no valid role")
        path = directory / f"samples_{wid}.csv"
        if not path.is_file():
            raise ConfigError(f"missing samples file {path}")
        with path.open("r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            next(reader)  # header
            for row in reader:
                feats = np.array([float(v) for v in row[:n_feat]],
                                 dtype=np.float64).reshape(WINDOW_S, N_CHANNELS)
                buckets[role].append(SequenceSample(
                    features=feats,
                    ssi=float(row[n_feat]),
                    severity_class=int(row[n_feat + 1]),
                    domain_id=int(row[n_feat + 2]),
                    well_id=wid,
                    t_start=int(row[n_feat + 3]),
                ))
    return DatasetSplit(
        train=buckets["train"],
        validation=buckets["validation"],
        test=buckets["test"],
        n_domains=int(head["n_domains"]),
        stats=stats,
        domain_map={k: int(v) for k, v in head["domain_map"].items()},
        assignment=assignment,
        field_map=head["field_map"],
        dropped={k: int(v) for k, v in head.get("dropped", {}).items()},
    )


def class_histogram(samples) -> dict:
    counts = {c: 0 for c in (1, 2, 3, 4)}
    for s in samples:
        counts[s.severity_class] += 1
    return counts
