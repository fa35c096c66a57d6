"""Fused layer ops: LSTM, layer normalization, dense, gradient reversal.

Each op is a single graph node whose backward pass is derived by hand.
The LSTM uses one large input projection for all timesteps and batches
the weight-gradient contractions after the recurrent backward sweep, so
the sequential per-step work is limited to the recurrence itself.
"""
from __future__ import annotations

import numpy as np

from ..exceptions import ConfigError, ShapeError
from .tensor import Tensor


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # piecewise form avoids overflow in exp for large |z|
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """Run an LSTM over a full sequence, returning every hidden state.

    Parameters
    ----------
    x : Tensor, shape (B, T, F)
        Input sequence batch.
    wx : Tensor, shape (F, 4H)
        Input projection for the i, f, g, o gates (concatenated).
    wh : Tensor, shape (H, 4H)
        Recurrent projection.
    b : Tensor, shape (4H,)
        Gate biases.

    Returns
    -------
    Tensor, shape (B, T, H)
        Hidden state at every timestep.  Initial hidden and cell states
        are zero.
    """
    xd = x.data
    if xd.ndim != 3:
        raise ShapeError(f"lstm expects (B, T, F) input, got {xd.shape}")
    B, T, F = xd.shape
    if wx.data.ndim != 2 or wx.data.shape[0] != F or wx.data.shape[1] % 4 != 0:
        raise ShapeError(f"lstm kernel shape {wx.data.shape} incompatible with input {xd.shape}")
    H = wx.data.shape[1] // 4
    if wh.data.shape != (H, 4 * H):
        raise ShapeError(f"lstm recurrent shape {wh.data.shape}, expected {(H, 4 * H)}")
    if b.data.shape != (4 * H,):
        raise ShapeError(f"lstm bias shape {b.data.shape}, expected {(4 * H,)}")

    whd = wh.data
    # one GEMM for the input path of every timestep
    xw = xd.reshape(B * T, F) @ wx.data
    xw += b.data
    xw = xw.reshape(B, T, 4 * H)

    acts = np.empty((B, T, 4 * H))   # post-activation gates i, f, g, o
    cs = np.empty((B, T, H))
    tanh_c = np.empty((B, T, H))
    out = np.empty((B, T, H))

    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = xw[:, t] + h @ whd
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        acts[:, t, :H] = i
        acts[:, t, H:2 * H] = f
        acts[:, t, 2 * H:3 * H] = g
        acts[:, t, 3 * H:] = o
        cs[:, t] = c
        tanh_c[:, t] = tc
        out[:, t] = h

    def backward(grad_out: np.ndarray):
        dz_all = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            i = acts[:, t, :H]
            f = acts[:, t, H:2 * H]
            g = acts[:, t, 2 * H:3 * H]
            o = acts[:, t, 3 * H:]
            tc = tanh_c[:, t]
            c_prev = cs[:, t - 1] if t > 0 else np.zeros((B, H))
            dh = grad_out[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = dz_all[:, t]
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
            dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz @ whd.T

        h_prev = np.empty((B, T, H))
        h_prev[:, 0] = 0.0
        if T > 1:
            h_prev[:, 1:] = out[:, :-1]
        dz_flat = dz_all.reshape(B * T, 4 * H)
        dwx = xd.reshape(B * T, F).T @ dz_flat
        dwh = h_prev.reshape(B * T, H).T @ dz_flat
        db = dz_flat.sum(axis=0)
        dx = (dz_flat @ wx.data.T).reshape(B, T, F)
        return dx, dwx, dwh, db

    return Tensor(out, (x, wx, wh, b), backward)


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply an elementwise affine map."""
    xd = x.data
    H = xd.shape[-1]
    if gain.data.shape != (H,) or shift.data.shape != (H,):
        raise ShapeError(
            f"layer_norm affine shapes {gain.data.shape}/{shift.data.shape}, expected ({H},)"
        )
    mean = xd.mean(axis=-1, keepdims=True)
    centered = xd - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gain.data + shift.data

    def backward(grad_out: np.ndarray):
        axes = tuple(range(xd.ndim - 1))
        dgain = (grad_out * xhat).sum(axis=axes)
        dshift = grad_out.sum(axis=axes)
        dxhat = grad_out * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv_std * (dxhat - m1 - xhat * m2)
        return dx, dgain, dshift

    return Tensor(out, (x, gain, shift), backward)


def dense(x: Tensor, w: Tensor, b: Tensor, activation: str = "linear") -> Tensor:
    """Fully connected layer on (B, in) inputs with optional ReLU."""
    if activation not in ("linear", "relu"):
        raise ConfigError(f"unknown activation {activation!r}")
    xd = x.data
    if xd.ndim != 2:
        raise ShapeError(f"dense expects (B, in) input, got {xd.shape}")
    if w.data.ndim != 2 or w.data.shape[0] != xd.shape[1]:
        raise ShapeError(f"dense kernel {w.data.shape} incompatible with input {xd.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise ShapeError(f"dense bias {b.data.shape}, expected ({w.data.shape[1]},)")
    pre = xd @ w.data + b.data
    if activation == "relu":
        out = np.maximum(pre, 0.0)
        mask = pre > 0.0
    else:
        out = pre
        mask = None

    def backward(grad_out: np.ndarray):
        gz = grad_out * mask if mask is not None else grad_out
        dw = xd.T @ gz
        db = gz.sum(axis=0)
        dx = gz @ w.data.T
        return dx, dw, db

    return Tensor(out, (x, w, b), backward)


def gradient_reversal(x: Tensor, lam: float) -> Tensor:
    """Identity in the forward pass; backward multiplies by ``-lam``.

    With ``lam == 0`` the backward pass prunes the branch outright
    instead of propagating a zero array, leaving upstream gradient
    buffers bitwise untouched by this path.
    """
    lam = float(lam)
    if lam < 0.0:
        raise ConfigError(f"gradient reversal strength must be >= 0, got {lam}")

    def backward(grad_out: np.ndarray):
        if lam == 0.0:
            return (None,)
        return ((-lam) * grad_out,)

    return Tensor(x.data, (x,), backward)


def last_timestep(x: Tensor) -> Tensor:
    """Select the final timestep of a (B, T, H) sequence as (B, H)."""
    xd = x.data
    if xd.ndim != 3:
        raise ShapeError(f"last_timestep expects (B, T, H), got {xd.shape}")

    def backward(grad_out: np.ndarray):
        dx = np.zeros_like(xd)
        dx[:, -1] = grad_out
        return (dx,)

    return Tensor(xd[:, -1], (x,), backward)


def squeeze_width_one(x: Tensor) -> Tensor:
    """Reshape a (B, 1) prediction column to a flat (B,) vector."""
    xd = x.data
    if xd.ndim != 2 or xd.shape[1] != 1:
        raise ShapeError(f"squeeze_width_one expects (B, 1), got {xd.shape}")
    return Tensor(xd[:, 0], (x,), lambda g: (g.reshape(xd.shape),))
