"""Named collection of learnable tensors."""
from __future__ import annotations

from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from config import settings
from core.errors import ShapeError
from core.tensor import Tensor

Shape = tuple[int, int, int, int]


class ParamStore:
    """Ordered map from hierarchical name (``scene.enc.dfsb1.down.weight``) to Tensor.

    Iteration order is insertion order, which is the order the network
    enumerates its layers; checkpoints and optimizer state rely on it.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    @classmethod
    def from_shapes(cls, shapes: Iterable[tuple[str, Shape]], seed: int,
                    std: float = settings.INIT_STD, dtype=np.float32) -> "ParamStore":
        """Seeded Gaussian(0, std) weights; tensors named ``*.bias`` start at zero."""
        rng = np.random.default_rng(seed)
        store = cls()
        for name, shape in shapes:
            if name.endswith(".bias"):
                data = np.zeros(shape, dtype=dtype)
            else:
                data = (rng.standard_normal(shape) * std).astype(dtype)
            store.add(name, Tensor(data, requires_grad=True, name=name))
        return store

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "ParamStore":
        store = cls()
        for name, array in arrays.items():
            store.add(name, Tensor(array, requires_grad=True, name=name))
        return store

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ShapeError(f"duplicate parameter name {name!r}")
        tensor.name = name
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise ShapeError(f"unknown parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def num_parameters(self) -> int:
        return sum(t.size for t in self._params.values())

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.grad = None

    def subset(self, prefixes: Sequence[str]) -> "ParamStore":
        """View sharing the same Tensor objects for every name under ``prefixes``."""
        view = ParamStore()
        for name, tensor in self._params.items():
            if name.startswith(tuple(prefixes)):
                view._params[name] = tensor
        return view

    def astype(self, dtype) -> "ParamStore":
        """Independent copy at another precision (gradient checks run at float64)."""
        return ParamStore.from_arrays({name: t.data.astype(dtype)
                                       for name, t in self._params.items()})

    def check_shapes(self, expected: Iterable[tuple[str, Shape]]) -> None:
        """Raise ShapeError unless names and shapes equal ``expected`` exactly."""
        expected = dict(expected)
        missing = [name for name in expected if name not in self._params]
        if missing:
            raise ShapeError(f"missing parameters: {', '.join(missing[:5])}"
                             + (" ..." if len(missing) > 5 else ""))
        extra = [name for name in self._params if name not in expected]
        if extra:
            raise ShapeError(f"unexpected parameters: {', '.join(extra[:5])}"
                             + (" ..." if len(extra) > 5 else ""))
        for name, shape in expected.items():
            actual = self._params[name].shape
            if tuple(actual) != tuple(shape):
                raise ShapeError(f"parameter {name}: shape {actual} != expected {tuple(shape)}")
