"""Target-well adaptation: fine-tune early layers on a small labeled slice.

The source bundle is cloned and only a kind-specific set of early
parameters is optimized — the first LSTM+LayerNorm pair of the
generator, plus (for bundles with the deep SSI head) the first two
dense layers of that head.  Everything else is frozen; a checksum over
the frozen parameters proves it.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np

from .exceptions import ConfigError, InsufficientDataError, TrainingDiverged
from .metrics import normalized_dtw
from .models import ModelBundle, predict_ssi
from .nn import Adam
from .nn.checkpoint import parameter_checksum
from .objectives import erm_loss
from .training import improvement_percent, samples_to_arrays

GENERATOR_TRAINABLE = ("lstm0/wx", "lstm0/wh", "lstm0/b", "ln0/gain", "ln0/shift")
SSI_HEAD_TRAINABLE = ("dense0/w", "dense0/b", "dense1/w", "dense1/b")

REPORT_COLUMNS = ("well", "kind", "dtw_pre", "dtw_post", "improvement_pct")


def trainable_parameters(bundle: ModelBundle) -> list:
    """The kind-specific adaptable parameters, in deterministic order.

    Baseline bundles adapt only the first generator pair (its head is a
    single layer); adg and irm bundles additionally adapt the first two
    dense layers of the SSI head.  The domain classifier is never
    adapted.
    """
    chosen = [_entry(bundle.generator, name) for name in GENERATOR_TRAINABLE]
    if bundle.kind != "baseline":
        chosen.extend(_entry(bundle.ssi_head, name) for name in SSI_HEAD_TRAINABLE)
    return chosen


def _entry(pset, name):
    for p in pset:
        if p.name == name:
            return p
    raise ConfigError(f"no parameter named {name!r}")


def frozen_parameters(bundle: ModelBundle) -> list:
    trainable = {id(p) for p in trainable_parameters(bundle)}
    out = []
    for pset in bundle.parameter_sets():
        for p in pset:
            if id(p) not in trainable:
                out.append(p)
    return out


def frozen_checksum(bundle: ModelBundle) -> str:
    return parameter_checksum([frozen_parameters(bundle)])


def _sorted_single_well(samples: Sequence) -> list:
    if not samples:
        raise InsufficientDataError("no target samples")
    wells = {s.well_id for s in samples}
    if len(wells) != 1:
        raise ConfigError(f"target samples span several wells: {sorted(wells)}")
    return sorted(samples, key=lambda s: s.t_start)


def _adaptation_count(n: int, fraction: float) -> int:
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"fraction must be in (0, 1), got {fraction}")
    n_adapt = int(math.floor(n * fraction))
    if n_adapt < 1:
        raise InsufficientDataError(
            f"first {fraction:.0%} of {n} sequences is less than one batch"
        )
    if n_adapt >= n:
        raise InsufficientDataError("adaptation slice leaves nothing to evaluate")
    return n_adapt


@dataclass
class FineTuneResult:
    bundle: ModelBundle
    frozen_checksum: str
    trainable_names: list
    n_adapt: int
    final_train_mse: Optional[float]


def fine_tune(bundle: ModelBundle, target_samples: Sequence,
              fraction: float = 0.10, epochs_ft: int = 20,
              learning_rate: float = 1e-3) -> FineTuneResult:
    """Adapt a trained bundle to one target well.

    The first ``fraction`` of the well's windows (chronologically) form
    the adaptation set, trained full-batch for ``epochs_ft`` epochs with
    the same optimizer family and learning rate as source training.
    ``epochs_ft=0`` returns an unchanged copy.  The source bundle is
    never mutated.
    """
    if epochs_ft < 0:
        raise ConfigError(f"epochs_ft must be >= 0, got {epochs_ft}")
    rows = _sorted_single_well(target_samples)
    n_adapt = _adaptation_count(len(rows), fraction)

    adapted = bundle.copy()
    names = (list(GENERATOR_TRAINABLE)
             + (list(SSI_HEAD_TRAINABLE) if bundle.kind != "baseline" else []))
    checksum_before = frozen_checksum(adapted)

    final_mse: Optional[float] = None
    if epochs_ft > 0:
        x, y, _ = samples_to_arrays(rows[:n_adapt])
        opt = Adam(trainable_parameters(adapted), lr=learning_rate)
        for epoch in range(1, epochs_ft + 1):
            total, br = erm_loss(adapted, x, y)
            if not math.isfinite(br.total):
                raise TrainingDiverged(epoch, 0)
            total.backward()
            opt.step()
            for pset in adapted.parameter_sets():
                pset.zero_grads()
            final_mse = br.ssi_mse

    checksum_after = frozen_checksum(adapted)
    if checksum_after != checksum_before:
        raise AssertionError("frozen parameters changed during fine-tuning")
    return FineTuneResult(
        bundle=adapted,
        frozen_checksum=checksum_after,
        trainable_names=names,
        n_adapt=n_adapt,
        final_train_mse=final_mse,
    )


def evaluate_transfer(bundle_pre: ModelBundle, bundle_post: ModelBundle,
                      target_samples: Sequence, fraction: float = 0.10) -> dict:
    """Score both bundles on the evaluation slice of one target well.

    The evaluation slice is everything after the adaptation cut; the
    adaptation windows are never scored.
    """
    rows = _sorted_single_well(target_samples)
    n_adapt = _adaptation_count(len(rows), fraction)
    eval_rows = rows[n_adapt:]
    x, y, _ = samples_to_arrays(eval_rows)
    pre = normalized_dtw(y, predict_ssi(bundle_pre, x))
    post = normalized_dtw(y, predict_ssi(bundle_post, x))
    return {
        "well": rows[0].well_id,
        "n_eval": len(eval_rows),
        "dtw_pre": pre,
        "dtw_post": post,
        "improvement_pct": improvement_percent(pre, post) if pre > 0 else 0.0,
    }


def transfer_report(bundles: Dict[str, ModelBundle], test_samples: Sequence,
                    fraction: float = 0.10, epochs_ft: int = 20,
                    learning_rate: float = 1e-3) -> list:
    """Fine-tune every bundle on every test well and collect paired rows."""
    if not bundles:
        raise ConfigError("transfer_report needs at least one bundle")
    by_well: dict = {}
    for s in test_samples:
        by_well.setdefault(s.well_id, []).append(s)
    if not by_well:
        raise InsufficientDataError("no test samples for transfer")
    rows = []
    for wid in sorted(by_well):
        well_samples = by_well[wid]
        for kind in sorted(bundles):
            result = fine_tune(bundles[kind], well_samples, fraction=fraction,
                               epochs_ft=epochs_ft, learning_rate=learning_rate)
            scored = evaluate_transfer(bundles[kind], result.bundle,
                                       well_samples, fraction=fraction)
            rows.append({
                "well": wid,
                "kind": kind,
                "dtw_pre": scored["dtw_pre"],
                "dtw_post": scored["dtw_post"],
                "improvement_pct": scored["improvement_pct"],
            })
    return rows


def save_transfer_report(rows: Sequence[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow([_format(row[c]) for c in REPORT_COLUMNS])


def _format(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)
