"""scikit-learn compatible front end over the sequence models.

These wrappers speak the fit/predict/get_params protocol so the models
drop into sklearn pipelines and model-selection tools.  Inputs are
window batches of shape (n_windows, 60, 5); the lower-level split and
training APIs remain the primary interface for well-oriented work.
"""
from __future__ import annotations

import warnings
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .models import embeddings, predict_ssi
from .training import TrainConfig, predicted_classes, train
from .windowing import (
    N_CHANNELS, WINDOW_S, DatasetSplit, NormalizationStats, SequenceSample,
)


def _check_windows(x, window_s: Optional[int] = WINDOW_S,
                   n_channels: int = N_CHANNELS) -> np.ndarray:
    """Validate a (n_windows, T, C) batch, sklearn-style."""
    x = check_array(x, allow_nd=True, dtype=np.float64)
    want_t = "T" if window_s is None else window_s
    if (x.ndim != 3 or x.shape[2] != n_channels
            or (window_s is not None and x.shape[1] != window_s)):
        raise ValueError(
            f"expected windows of shape (n, {want_t}, {n_channels}), "
            f"got {x.shape}"
        )
    return x


def _check_targets(y, n: int) -> np.ndarray:
    y = check_array(y, ensure_2d=False, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != n:
        raise ValueError(f"expected {n} targets, got array of shape {y.shape}")
    if np.any(y < 0):
        raise ValueError("SSI targets must be non-negative")
    return y


def _check_domains(domain, n: int) -> np.ndarray:
    if domain is None:
        return np.zeros(n, dtype=np.int64)
    domain = check_array(domain, ensure_2d=False, dtype=np.int64)
    if domain.ndim != 1 or domain.shape[0] != n:
        raise ValueError(f"expected {n} domain labels, got {domain.shape}")
    return domain


class ChannelScaler(TransformerMixin, BaseEstimator):
    """Standardize each surface channel over all windows and timesteps.

    Mirrors the per-channel normalization used when windowing raw well
    records, for callers who start from window arrays instead.
    """

    def fit(self, X, y=None):
        X = _check_windows(X, window_s=None)
        self.mean_ = X.mean(axis=(0, 1))
        std = X.std(axis=(0, 1))
        self.std_ = np.where(std > 1e-12, std, 1.0)
        self.n_features_in_ = X.shape[2]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = _check_windows(X, window_s=None)
        return (X - self.mean_) / self.std_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        X = _check_windows(X, window_s=None)
        return X * self.std_ + self.mean_


class StickSlipRegressor(RegressorMixin, BaseEstimator):
    """Sequence regressor for the stick-slip index of 60 s windows.

    ``kind`` selects the training objective: ``baseline`` (plain MSE),
    ``adg`` (adds an adversarial domain classifier behind a gradient
    reversal layer; requires ``grl_lambda``), or ``irm`` (adds an
    invariance penalty per domain; requires ``alpha``).  Domain labels
    are passed to :meth:`fit` as an optional third array.
    """

    def __init__(self, kind: str = "baseline", hidden_layer_count: int = 6,
                 units: int = 64, regularization_coefficient: float = 1e-4,
                 grl_lambda: Optional[float] = None,
                 alpha: Optional[float] = None, epochs: int = 150,
                 batch_size: int = 256, learning_rate: float = 1e-3,
                 validation_fraction: float = 0.1, seed: int = 0):
        self.kind = kind
        self.hidden_layer_count = hidden_layer_count
        self.units = units
        self.regularization_coefficient = regularization_coefficient
        self.grl_lambda = grl_lambda
        self.alpha = alpha
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.validation_fraction = validation_fraction
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            kind=self.kind,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            grl_lambda=self.grl_lambda,
            alpha=self.alpha,
            hidden_layer_count=self.hidden_layer_count,
            units=self.units,
            regularization_coefficient=self.regularization_coefficient,
            seeds=(self.seed,),
            validation_fraction=self.validation_fraction,
        )

    def fit(self, X, y, domain=None):
        """Train on pre-normalized windows.

        Each distinct domain label becomes one pseudo-well, so the
        chronological validation carve holds out the tail of every
        domain's windows in input order.
        """
        X = _check_windows(X)
        y = _check_targets(y, X.shape[0])
        domain = _check_domains(domain, X.shape[0])
        config = self._config()
        config.validate()

        unique = sorted(int(d) for d in np.unique(domain))
        dense = {d: i for i, d in enumerate(unique)}
        counters = {d: 0 for d in unique}
        samples = []
        for i in range(X.shape[0]):
            d = int(domain[i])
            samples.append(SequenceSample(
                features=X[i], ssi=float(y[i]), severity_class=1,
                domain_id=dense[d], well_id=f"domain{d}",
                t_start=WINDOW_S * counters[d],
            ))
            counters[d] += 1
        stats = NormalizationStats(mean=np.zeros(N_CHANNELS),
                                   std=np.ones(N_CHANNELS),
                                   fitted_on=sorted({s.well_id for s in samples}))
        split = DatasetSplit(
            train=samples, validation=[], test=[], n_domains=len(unique),
            stats=stats,
            domain_map={f"domain{d}": dense[d] for d in unique},
            assignment={f"domain{d}": "train" for d in unique},
            field_map={f"domain{d}": f"domain{d}" for d in unique},
        )
        if self.kind in ("adg", "irm") and len(unique) < 2:
            warnings.warn(f"{self.kind} with a single domain label reduces "
                          "to the baseline objective")
        result = train(split, config, seed=self.seed)
        self.train_result_ = result
        self.bundle_ = result.bundle
        self.n_features_in_ = N_CHANNELS
        self.n_domains_ = len(unique)
        return self

    def predict(self, X):
        """Predicted SSI per window, shape (n_windows,)."""
        check_is_fitted(self, "bundle_")
        X = _check_windows(X)
        return predict_ssi(self.bundle_, X, batch_size=self.batch_size)

    def predict_class(self, X):
        """Predicted severity class (1..4) per window."""
        return np.array(predicted_classes(self.predict(X)), dtype=np.int64)

    def embed(self, X):
        """Generator embeddings, shape (n_windows, units)."""
        check_is_fitted(self, "bundle_")
        X = _check_windows(X)
        return embeddings(self.bundle_, X, batch_size=self.batch_size)
