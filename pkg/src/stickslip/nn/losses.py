"""Loss ops: mean squared error, softmax cross entropy, L2 penalty.

Targets and labels are plain numpy arrays (never differentiated).
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from ..exceptions import ConfigError, ShapeError
from .tensor import Tensor


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error between a (B,) prediction and a (B,) target."""
    target = np.asarray(target, dtype=np.float64)
    pd = pred.data
    if pd.ndim != 1 or pd.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {pd.shape} vs target {target.shape}")
    if pd.shape[0] == 0:
        raise ShapeError("mse_loss on an empty batch")
    diff = pd - target
    n = pd.shape[0]
    val = (diff * diff).mean()

    def backward(grad_out: np.ndarray):
        return ((2.0 / n) * diff * grad_out,)

    return Tensor(val, (pred,), backward)


def cross_entropy_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross entropy for integer class labels.

    Parameters
    ----------
    logits : Tensor, shape (B, K)
    labels : ndarray of int, shape (B,), values in [0, K)
    """
    ld = logits.data
    labels = np.asarray(labels)
    if ld.ndim != 2:
        raise ShapeError(f"cross_entropy_loss expects (B, K) logits, got {ld.shape}")
    B, K = ld.shape
    if labels.shape != (B,):
        raise ShapeError(f"labels shape {labels.shape}, expected ({B},)")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ShapeError("labels must be integers")
    if B == 0:
        raise ShapeError("cross_entropy_loss on an empty batch")
    if labels.min() < 0 or labels.max() >= K:
        raise ShapeError(f"labels out of range [0, {K})")
    m = ld.max(axis=1, keepdims=True)
    shifted = ld - m
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    softmax = exp / denom
    log_probs = shifted - np.log(denom)
    val = -log_probs[np.arange(B), labels].mean()

    def backward(grad_out: np.ndarray):
        g = softmax.copy()
        g[np.arange(B), labels] -= 1.0
        return (g * (grad_out / B),)

    return Tensor(val, (logits,), backward)


def l2_penalty(tensors: Iterable[Tensor], coefficient: float) -> Tensor:
    """``coefficient * sum(t ** 2)`` over every entry of every tensor.

    A zero coefficient returns a constant 0.0 scalar with no graph
    parents, so the penalty contributes nothing to any gradient buffer.
    """
    coefficient = float(coefficient)
    if coefficient < 0.0:
        raise ConfigError(f"l2 coefficient must be >= 0, got {coefficient}")
    if coefficient == 0.0:
        return Tensor(0.0)
    if hasattr(tensors, "tensors"):
        tensors = tensors.tensors()
    tensors = tuple(tensors)
    val = 0.0
    for t in tensors:
        val += (t.data * t.data).sum()
    val *= coefficient

    def backward(grad_out: np.ndarray):
        factor = 2.0 * coefficient * grad_out
        return tuple(factor * t.data for t in tensors)

    return Tensor(val, tensors, backward)


def irm_beta_gradient(pred: Tensor, target: np.ndarray) -> Tensor:
    """Derivative of the scaled-prediction MSE with respect to its scale.

    For predictions ``p`` and targets ``y``, the probe loss
    ``mean((beta * p - y) ** 2)`` has derivative ``(2/N) * sum(p * (beta*p - y))``
    in ``beta``; this op evaluates it at ``beta == 1`` and stays
    differentiable in ``p`` so its square can serve as an invariance
    penalty.
    """
    target = np.asarray(target, dtype=np.float64)
    pd = pred.data
    if pd.ndim != 1 or pd.shape != target.shape:
        raise ShapeError(f"irm_beta_gradient: prediction {pd.shape} vs target {target.shape}")
    if pd.shape[0] == 0:
        raise ShapeError("irm_beta_gradient on an empty batch")
    n = pd.shape[0]
    val = (2.0 / n) * float(np.sum(pd * (pd - target)))

    def backward(grad_out: np.ndarray):
        return ((2.0 / n) * (2.0 * pd - target) * grad_out,)

    return Tensor(val, (pred,), backward)
