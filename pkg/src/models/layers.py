"""
Module base class and the parametrised layers the models are built from
"""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np
from scipy.stats import truncnorm

from src.autodiff import ops
from src.autodiff.tensor import Tensor
from src.exceptions import CheckpointError


def truncated_normal(
    rng: np.random.Generator, shape: tuple[int, ...], std: float = 0.02
) -> np.ndarray:
    """Normal(0, std) truncated at two standard deviations"""
    return truncnorm.rvs(-2.0, 2.0, scale=std, size=shape, random_state=rng)


def he_uniform(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int
) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Container of named parameter tensors and child modules"""

    def __init__(self):
        self.training = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self, prefix: str) -> Iterator[tuple[str, object]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    yield f"{full}.{i}", item
            else:
                yield full, value

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        """All parameters, sorted lexicographically by dotted name"""
        found: list[tuple[str, Tensor]] = []
        for name, value in self._children(prefix):
            if isinstance(value, Tensor):
                found.append((name, value))
            elif isinstance(value, Module):
                found.extend(value.named_parameters(f"{name}."))
        return sorted(found, key=lambda item: item[0])

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children(""):
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def freeze(self) -> "Module":
        """Exclude every parameter from gradient tracking"""
        for p in self.parameters():
            p.requires_grad = False
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise CheckpointError(
                f"State mismatch: missing {missing}, unexpected {unexpected}"
            )
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise CheckpointError(
                    f"Shape mismatch for {name}: expected {p.shape}, got {value.shape}"
                )
            p.data = value.copy()


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Tensor(
            truncated_normal(rng, (in_features, out_features)), requires_grad=True
        )
        self.bias = Tensor(np.zeros(out_features), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    """3x3 convolution with He-uniform weights and zero bias"""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        stride: int = 1,
        pad: int = 1,
        kernel_size: int = 3,
    ):
        super().__init__()
        fan_in = in_channels * kernel_size * kernel_size
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.weight = Tensor(he_uniform(rng, shape, fan_in), requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True)
        self.stride = stride
        self.pad = pad

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias, self.eps)


class Dropout(Module):
    def __init__(self, p: float):
        super().__init__()
        self.p = p

    def forward(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        return ops.dropout(x, self.p, self.training, rng)
