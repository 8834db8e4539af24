"""Parameter containers and the small layer set used by the two networks."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from . import ops
from .tensor import Tensor


def kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Module:
    """Minimal parameter tree. Parameters and sub-modules are discovered from
    attributes in assignment order, which fixes checkpoint tensor order."""

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_children", OrderedDict())

    def __setattr__(self, key, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[key] = value
        elif isinstance(value, Module):
            self._children[key] = value
        elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
            for i, v in enumerate(value):
                self._children[f"{key}.{i}"] = v
        object.__setattr__(self, key, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, p.data.copy()) for n, p in self.named_parameters())

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state dict mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = np.ascontiguousarray(arr, dtype=p.dtype)

    def to(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, kernel: int = 3, bias: bool = True):
        super().__init__()
        fan_in = in_ch * kernel * kernel
        self.weight = Tensor(kaiming_uniform(rng, (kernel, kernel, in_ch, out_ch), fan_in), requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, np.float32), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias)


class Linear(Module):
    def __init__(self, in_f: int, out_f: int, rng: np.random.Generator, scale: float = 1.0):
        super().__init__()
        self.weight = Tensor(kaiming_uniform(rng, (out_f, in_f), in_f) * np.float32(scale), requires_grad=True)
        self.bias = Tensor(np.zeros(out_f, np.float32), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class InstanceNorm2d(Module):
    def __init__(self, channels: int):
        super().__init__()
        self.gamma = Tensor(np.ones(channels, np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, np.float32), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ops.instance_norm(x, self.gamma, self.beta)


class ConvBlock(Module):
    """conv -> (instance norm) -> ReLU, repeated ``n_convs`` times."""

    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, n_convs: int = 2, norm: str = "instance"):
        super().__init__()
        if norm not in ("instance", "none"):
            raise ValueError(f"unknown norm {norm!r}")
        convs, norms = [], []
        for i in range(n_convs):
            convs.append(Conv2d(in_ch if i == 0 else out_ch, out_ch, rng))
            if norm == "instance":
                norms.append(InstanceNorm2d(out_ch))
        self.convs = convs
        self.norms = norms

    def forward(self, x: Tensor) -> Tensor:
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if self.norms:
                x = self.norms[i](x)
            x = ops.relu(x)
        return x
