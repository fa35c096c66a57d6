"""Adam optimizer over named parameter collections."""
from __future__ import annotations

import numpy as np

from ..exceptions import ConfigError
from .params import ParameterSet


class Adam:
    """Adam with bias correction, operating in place on parameter buffers.

    Parameters registered at construction define the update order, which
    is deterministic (insertion order of the underlying sets).  Entries
    whose gradient is ``None`` at ``step()`` time are skipped without
    advancing their moment estimates.
    """

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0.0:
            raise ConfigError(f"learning rate must be > 0, got {lr}")
        if isinstance(params, ParameterSet):
            params = list(params)
        self._params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self._m = [np.zeros_like(p.tensor.data) for p in self._params]
        self._v = [np.zeros_like(p.tensor.data) for p in self._params]
        self._t = [0] * len(self._params)

    def step(self) -> None:
        for idx, p in enumerate(self._params):
            g = p.tensor.grad
            if g is None:
                continue
            self._t[idx] += 1
            t = self._t[idx]
            m = self._m[idx]
            v = self._v[idx]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p.tensor.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self._params:
            p.tensor.grad = None
