"""Named, ordered parameter collections.

Training code never touches raw arrays directly: parameters live in a
``ParameterSet`` that fixes iteration order (insertion order), carries a
role tag per entry, and supports deep copies for checkpointing.
"""
from __future__ import annotations

from typing import Iterator

import numpy as np

from ..exceptions import ConfigError
from .tensor import Tensor

ROLES = ("kernel", "recurrent", "bias", "gain", "shift")


class Parameter:
    """A trainable tensor plus bookkeeping."""

    __slots__ = ("name", "tensor", "role")

    def __init__(self, name: str, tensor: Tensor, role: str):
        if role not in ROLES:
            raise ConfigError(f"unknown parameter role {role!r}")
        self.name = name
        self.tensor = tensor
        self.role = role


class ParameterSet:
    """Ordered mapping from parameter name to :class:`Parameter`."""

    def __init__(self):
        self._entries: dict[str, Parameter] = {}

    def add(self, name: str, values: np.ndarray, role: str) -> Tensor:
        if name in self._entries:
            raise ConfigError(f"duplicate parameter name {name!r}")
        tensor = Tensor(np.array(values, dtype=np.float64))
        self._entries[name] = Parameter(name, tensor, role)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name].tensor

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._entries.values())

    def names(self) -> list[str]:
        return list(self._entries.keys())

    def tensors(self) -> list[Tensor]:
        return [p.tensor for p in self._entries.values()]

    def role(self, name: str) -> str:
        return self._entries[name].role

    def count(self) -> int:
        """Total number of scalar parameters."""
        return sum(p.tensor.data.size for p in self)

    def zero_grads(self) -> None:
        for p in self:
            p.tensor.grad = None

    def copy(self) -> "ParameterSet":
        out = ParameterSet()
        for p in self:
            out.add(p.name, p.tensor.data.copy(), p.role)
        return out

    def load_values(self, other: "ParameterSet") -> None:
        """Copy values from a set with identical names and shapes."""
        if self.names() != other.names():
            raise ConfigError("parameter name mismatch when loading values")
        for mine, theirs in zip(self, other):
            if mine.tensor.data.shape != theirs.tensor.data.shape:
                raise ConfigError(
                    f"shape mismatch for {mine.name!r}: "
                    f"{mine.tensor.data.shape} vs {theirs.tensor.data.shape}"
                )
            mine.tensor.data = theirs.tensor.data.copy()
