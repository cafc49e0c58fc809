"""Named parameter storage with fixed shapes."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from plnmt.errors import ContractError, DimensionError

INIT_SCALE = 0.08


class ParamStore:
    """Map from parameter name to a dense array.

    Weights are drawn from uniform(-0.08, 0.08) and biases start at zero;
    embedding tables use ``init="normal"`` (unit variance).
    Shapes are frozen at :meth:`add` time; :meth:`set` refuses to change them.
    """

    def __init__(self, seed: int = 0, dtype=np.float64):
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(self.seed)
        self._values: dict[str, np.ndarray] = {}

    def add(self, name: str, shape, init: str = "uniform") -> np.ndarray:
        if name in self._values:
            raise ContractError(f"parameter {name!r} already exists")
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise DimensionError(f"parameter {name!r}: non-positive shape {shape}")
        if init == "uniform":
            value = self.rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
        elif init == "normal":
            value = self.rng.standard_normal(size=shape)
        elif init == "zeros":
            value = np.zeros(shape)
        else:
            raise ContractError(f"unknown initializer {init!r}")
        self._values[name] = value.astype(self.dtype)
        return self._values[name]

    def add_affine(self, prefix: str, n_in: int, n_out: int) -> None:
        self.add(prefix + ".W", (n_out, n_in))
        self.add(prefix + ".b", (n_out,), init="zeros")

    def add_lstm(self, prefix: str, n_in: int, hidden: int) -> None:
        # gate order along the first axis: input, forget, candidate, output
        self.add(prefix + ".W", (4 * hidden, n_in + hidden))
        self.add(prefix + ".b", (4 * hidden,), init="zeros")

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def items(self):
        return self._values.items()

    def names(self) -> list[str]:
        return list(self._values)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self._values.items()}

    def set(self, name: str, value) -> None:
        value = np.asarray(value, dtype=self.dtype)
        if name not in self._values:
            raise ContractError(f"unknown parameter {name!r}")
        if value.shape != self._values[name].shape:
            raise DimensionError(
                f"parameter {name!r}: shape {value.shape} != {self._values[name].shape}")
        self._values[name] = value

    def copy(self) -> "ParamStore":
        other = ParamStore(self.seed, self.dtype)
        other._values = {k: v.copy() for k, v in self._values.items()}
        return other

    def astype(self, dtype) -> "ParamStore":
        other = ParamStore(self.seed, dtype)
        other._values = {k: v.astype(dtype) for k, v in self._values.items()}
        return other

    @classmethod
    def from_arrays(cls, arrays: dict, seed: int = 0, dtype=None) -> "ParamStore":
        arrays = {k: np.asarray(v) for k, v in arrays.items()}
        if dtype is None:
            dtype = next(iter(arrays.values())).dtype if arrays else np.float64
        store = cls(seed, dtype)
        store._values = {k: v.astype(dtype, copy=True) for k, v in arrays.items()}
        return store

    def num_values(self) -> int:
        return sum(v.size for v in self._values.values())
