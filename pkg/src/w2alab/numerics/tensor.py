"""Dense float64 tensors and named parameter collections."""

from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

from ..errors import ContractError


class Tensor:
    """A dense array of 64-bit reals in row-major order."""

    __slots__ = ("array",)

    def __init__(self, array):
        self.array = np.ascontiguousarray(array, dtype=np.float64)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.array.shape)

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the entries."""
        return self.array.reshape(-1)

    @property
    def size(self) -> int:
        return self.array.size

    def copy(self) -> "Tensor":
        return Tensor(self.array.copy())

    @staticmethod
    def zeros(shape) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=np.float64))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class ParameterRecord:
    """Named collection of trainable tensors, iterated in lexicographic order.

    Freezing makes the record immutable: any further mutation (adding entries,
    optimizer updates) raises ContractError.
    """

    def __init__(self, entries: dict[str, Tensor] | None = None):
        self._entries: dict[str, Tensor] = {}
        self._frozen = False
        if entries:
            for name, t in entries.items():
                self.add(name, t)

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> "ParameterRecord":
        self._frozen = True
        return self

    def add(self, name: str, tensor: Tensor) -> None:
        if self._frozen:
            raise ContractError(f"record is frozen; cannot add {name!r}")
        if name in self._entries:
            raise ContractError(f"duplicate parameter name {name!r}")
        self._entries[name] = tensor

    def set_value(self, name: str, array: np.ndarray) -> None:
        """Replace an entry's values in place (same shape)."""
        if self._frozen:
            raise ContractError(f"record is frozen; cannot update {name!r}")
        current = self._entries[name]
        if current.shape != tuple(np.shape(array)):
            raise ContractError(f"shape mismatch updating {name!r}")
        current.array[...] = array

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return sorted(self._entries)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in sorted(self._entries):
            yield name, self._entries[name]

    @property
    def total_count(self) -> int:
        return sum(t.size for t in self._entries.values())

    def copy(self) -> "ParameterRecord":
        out = ParameterRecord()
        for name, t in self.items():
            out.add(name, t.copy())
        return out

    def subset(self, prefix: str) -> "ParameterRecord":
        out = ParameterRecord()
        for name, t in self.items():
            if name.startswith(prefix):
                out.add(name, t)
        return out


def merge_records(records: Iterable[ParameterRecord]) -> ParameterRecord:
    """Combine records into one; names must not collide."""
    out = ParameterRecord()
    for rec in records:
        for name, t in rec.items():
            out.add(name, t)
    return out
