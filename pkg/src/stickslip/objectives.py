"""Training objectives and the domain-discrepancy probe.

Three losses share the convention that ``total`` is the scalar actually
backpropagated:

* ``erm_loss``: mse + l2.
* ``adg_loss``: mse + domain cross entropy + l2, with the classifier
  branch entered through a gradient reversal layer.  A single backward
  pass then realizes the adversarial update: classifier parameters
  descend the cross entropy while the generator receives the same
  gradient scaled by ``-lambda``.
* ``irm_loss``: per-domain mse plus ``alpha`` times the squared
  derivative of each domain's risk with respect to a scalar prediction
  scale evaluated at 1, plus l2.

With ``lambda == 0`` (adg) or ``alpha == 0`` (irm) the extra branches
are pruned from the graph outright, so generator and SSI-head gradients
are bitwise identical to the plain objective's.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import ConfigError, InsufficientDataError, ShapeError
from .models import (
    ModelBundle, domain_logits_from_embedding, embed, ssi_from_embedding,
)
from .nn import (
    Adam, ParameterSet, Tensor,
    add, scale, square,
    cross_entropy_loss, dense, irm_beta_gradient, l2_penalty, mse_loss,
)


@dataclass
class LossBreakdown:
    total: float
    ssi_mse: float
    l2: float
    domain_ce: Optional[float] = None
    irm_penalty: Optional[float] = None


def _l2_term(bundle: ModelBundle) -> Tensor:
    coeff = bundle.gen_config.regularization_coefficient
    tensors = []
    for pset in bundle.parameter_sets():
        tensors.extend(pset.tensors())
    return l2_penalty(tensors, coeff)


def _targets(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ShapeError(f"targets must be 1-d, got shape {y.shape}")
    return y


def erm_loss(bundle: ModelBundle, x, y):
    """Plain risk: mse through the bundle's SSI path, plus l2.

    Accepts any bundle kind; for adg/irm bundles this is the reduced
    objective their coefficients collapse to at zero.
    """
    pred = ssi_from_embedding(bundle, embed(bundle, x))
    m = mse_loss(pred, _targets(y))
    reg = _l2_term(bundle)
    total = add(m, reg)
    breakdown = LossBreakdown(total=total.item(), ssi_mse=m.item(), l2=reg.item())
    return total, breakdown


def adg_loss(bundle: ModelBundle, x, y, domains, grl_lambda: float):
    """Adversarial objective: mse + domain cross entropy + l2.

    ``domains`` are integer source-domain labels for every sample.  The
    embedding is computed once and shared by both heads.
    """
    if bundle.kind != "adg":
        raise ConfigError(f"adg_loss requires an adg bundle, got {bundle.kind!r}")
    y = _targets(y)
    domains = np.asarray(domains)
    if domains.shape != y.shape:
        raise ShapeError(f"domain labels shape {domains.shape} vs targets {y.shape}")
    if not np.issubdtype(domains.dtype, np.integer):
        raise ConfigError("domain labels must be integers")
    if domains.size and domains.min() < 0:
        raise ConfigError("domain labels must be >= 0 (source domains only)")
    if np.unique(domains).size < 2:
        warnings.warn("adg batch carries fewer than 2 distinct domains")

    z = embed(bundle, x)
    pred = ssi_from_embedding(bundle, z)
    logits = domain_logits_from_embedding(bundle, z, grl_lambda=grl_lambda)
    m = mse_loss(pred, y)
    ce = cross_entropy_loss(logits, domains)
    reg = _l2_term(bundle)
    total = add(add(m, ce), reg)
    breakdown = LossBreakdown(
        total=total.item(), ssi_mse=m.item(), domain_ce=ce.item(), l2=reg.item(),
    )
    return total, breakdown


def irm_loss(bundle: ModelBundle, domain_batches: Sequence, alpha: float):
    """Invariance-penalized objective over per-domain batches.

    ``domain_batches`` is a sequence of (x, y) pairs, one per source
    domain.  Each domain contributes ``mse_i + alpha * g_i**2`` where
    ``g_i`` is the derivative of that domain's mse with respect to a
    global prediction scale evaluated at scale 1 — the first-order
    optimality probe of the shared predictor.  Empty domain batches are
    skipped with a warning.
    """
    if bundle.kind != "irm":
        raise ConfigError(f"irm_loss requires an irm bundle, got {bundle.kind!r}")
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    alpha = float(alpha)
    terms = []
    mse_sum = 0.0
    pen_sum = 0.0
    for i, (x, y) in enumerate(domain_batches):
        y = _targets(y)
        if y.size == 0:
            warnings.warn(f"irm domain batch {i} is empty; skipped")
            continue
        pred = ssi_from_embedding(bundle, embed(bundle, x))
        m = mse_loss(pred, y)
        mse_sum += m.item()
        if alpha == 0.0:
            terms.append(m)
            continue
        pen = square(irm_beta_gradient(pred, y))
        pen_sum += pen.item()
        terms.append(add(m, scale(pen, alpha)))
    if not terms:
        raise InsufficientDataError("irm_loss needs at least one non-empty domain batch")
    acc = terms[0]
    for term in terms[1:]:
        acc = add(acc, term)
    reg = _l2_term(bundle)
    total = add(acc, reg)
    # combination: total == sum_i mse_i + alpha * sum_i penalty_i + l2
    breakdown = LossBreakdown(
        total=total.item(), ssi_mse=mse_sum, irm_penalty=pen_sum, l2=reg.item(),
    )
    return total, breakdown


def irm_penalty_value(pred: np.ndarray, target: np.ndarray) -> float:
    """Squared scale-derivative penalty for given predictions (no graph)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    g = irm_beta_gradient(Tensor(pred), target)
    return float(g.item() ** 2)


def estimate_h_divergence(features_a, features_b, seed: int = 0,
                          train_steps: int = 200, hidden: int = 32,
                          learning_rate: float = 1e-3,
                          holdout_fraction: float = 0.2) -> float:
    """Separability of two feature sets as ``1 - 2 * err``.

    A fresh two-layer dense probe is trained for a fixed step budget to
    distinguish the sets (labels 0/1) on a shuffled 80/20 split; ``err``
    is the held-out misclassification rate.  Values near 0 mean the sets
    are indistinguishable, near 1 cleanly separable.  The probe is a
    measurement instrument: it never touches the caller's graph.
    """
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"feature sets must be (N, D) with equal D: {a.shape} vs {b.shape}")
    min_side = 10
    if a.shape[0] < min_side or b.shape[0] < min_side:
        raise InsufficientDataError(
            f"need at least {min_side} samples per side, got {a.shape[0]} and {b.shape[0]}"
        )
    rng = np.random.default_rng(seed)

    def split(feats):
        n = feats.shape[0]
        order = rng.permutation(n)
        n_hold = max(1, int(round(n * holdout_fraction)))
        return feats[order[n_hold:]], feats[order[:n_hold]]

    a_train, a_hold = split(a)
    b_train, b_hold = split(b)
    x_train = np.concatenate([a_train, b_train])
    y_train = np.concatenate([np.zeros(len(a_train), dtype=np.int64),
                              np.ones(len(b_train), dtype=np.int64)])
    x_hold = np.concatenate([a_hold, b_hold])
    y_hold = np.concatenate([np.zeros(len(a_hold), dtype=np.int64),
                             np.ones(len(b_hold), dtype=np.int64)])

    d = a.shape[1]
    probe = ParameterSet()
    limit1 = np.sqrt(6.0 / (d + hidden))
    probe.add("dense0/w", rng.uniform(-limit1, limit1, (d, hidden)), "kernel")
    probe.add("dense0/b", np.zeros(hidden), "bias")
    limit2 = np.sqrt(6.0 / (hidden + 2))
    probe.add("dense1/w", rng.uniform(-limit2, limit2, (hidden, 2)), "kernel")
    probe.add("dense1/b", np.zeros(2), "bias")
    opt = Adam(probe, lr=learning_rate)

    def logits(xs: np.ndarray) -> Tensor:
        t = dense(Tensor(xs), probe["dense0/w"], probe["dense0/b"], activation="relu")
        return dense(t, probe["dense1/w"], probe["dense1/b"], activation="linear")

    for _ in range(train_steps):
        loss = cross_entropy_loss(logits(x_train), y_train)
        loss.backward()
        opt.step()
        opt.zero_grad()

    pred_hold = np.argmax(logits(x_hold).data, axis=1)
    err = float(np.mean(pred_hold != y_hold))
    return 1.0 - 2.0 * err
