"""Named collections of learnable arrays."""
from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from .tensor import Tensor


class ParamStore:
    """Ordered name -> array mapping with a parallel gradient slot per entry."""

    def __init__(self, arrays: Mapping[str, np.ndarray] | None = None):
        self.arrays: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        for k, v in (arrays or {}).items():
            self.add(k, v)

    def add(self, name: str, value) -> np.ndarray:
        if name in self.arrays:
            raise KeyError(f"duplicate parameter {name!r}")
        arr = np.array(value, dtype=np.float32)
        self.arrays[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name):
        return self.arrays[name]

    def __contains__(self, name):
        return name in self.arrays

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def __len__(self):
        return len(self.arrays)

    def items(self):
        return self.arrays.items()

    def num_elements(self) -> int:
        return int(np.sum([a.size for a in self.arrays.values()], dtype=np.int64))

    def leaves(self, dtype=np.float32, requires_grad=True) -> dict[str, Tensor]:
        return {k: Tensor(v.astype(dtype), requires_grad=requires_grad) for k, v in self.arrays.items()}

    def constants(self, dtype=np.float32) -> dict[str, Tensor]:
        return self.leaves(dtype, requires_grad=False)

    def pull_grads(self, leaves: Mapping[str, Tensor]):
        for k, t in leaves.items():
            if t.grad is not None:
                self.grads[k] = t.grad.astype(np.float32)
            else:
                self.grads[k] = np.zeros_like(self.arrays[k])

    def copy(self) -> "ParamStore":
        return ParamStore({k: v.copy() for k, v in self.arrays.items()})
