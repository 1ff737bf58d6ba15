"""Lightweight module system: parameter registration, state dict, basic layers."""

from __future__ import annotations

import numpy as np

from trajvid.errors import ModelShapeMismatchError
from trajvid.nn import functional as F
from trajvid.nn.autograd import Tensor


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, mod in self._modules.items():
            yield from mod.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict, strict: bool = True):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if strict and (missing or unexpected):
            raise ModelShapeMismatchError(
                f"state dict mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}"
            )
        for name, p in own.items():
            if name not in state:
                continue
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise ModelShapeMismatchError(
                    f"parameter {name}: checkpoint shape {arr.shape} != model shape {p.data.shape}"
                )
            p.data = arr.astype(p.data.dtype)

    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters())


class ModuleList(Module):
    def __init__(self, mods=()):
        super().__init__()
        self._items = []
        for m in mods:
            self.append(m)

    def append(self, mod: Module):
        self._modules[str(len(self._items))] = mod
        self._items.append(mod)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def _he_normal(rng, shape, fan_in, dtype):
    std = np.sqrt(2.0 / fan_in)
    return rng.normal(0.0, std, size=shape).astype(dtype)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, stride=1, padding=0, bias=True, *,
                 rng, dtype=np.float32, zero_init=False):
        super().__init__()
        self.stride = stride
        self.padding = padding
        shape = (c_out, c_in, kernel, kernel)
        if zero_init:
            w = np.zeros(shape, dtype=dtype)
        else:
            w = _he_normal(rng, shape, c_in * kernel * kernel, dtype)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True) if bias else None

    def __call__(self, x):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Conv3d(Module):
    def __init__(self, c_in, c_out, kernel=(3, 3, 3), padding=(1, 1, 1), bias=True, *,
                 rng, dtype=np.float32, zero_init=False):
        super().__init__()
        self.padding = tuple(padding)
        shape = (c_out, c_in) + tuple(kernel)
        fan_in = c_in * int(np.prod(kernel))
        w = np.zeros(shape, dtype=dtype) if zero_init else _he_normal(rng, shape, fan_in, dtype)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True) if bias else None

    def __call__(self, x):
        return F.conv3d(x, self.weight, self.bias, self.padding)


class Linear(Module):
    def __init__(self, d_in, d_out, bias=True, *, rng, dtype=np.float32, zero_init=False):
        super().__init__()
        w = np.zeros((d_in, d_out), dtype=dtype) if zero_init else _he_normal(rng, (d_in, d_out), d_in, dtype)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True) if bias else None

    def __call__(self, x):
        out = F.matmul(x, self.weight)
        if self.bias is not None:
            out = F.add(out, self.bias)
        return out


class GroupNorm(Module):
    def __init__(self, num_groups, channels, eps=1e-5, *, dtype=np.float32):
        super().__init__()
        if channels % num_groups != 0:
            raise ModelShapeMismatchError(f"channels {channels} not divisible by groups {num_groups}")
        self.num_groups = num_groups
        self.eps = eps
        self.weight = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return F.group_norm(x, self.num_groups, self.weight, self.bias, self.eps)
