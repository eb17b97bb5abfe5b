"""Parameter-owning building blocks used by the prompt blocks and the net.

Each layer registers its tensors into a shared :class:`ParamStore` under
a dotted path, so checkpoints and the optimizer see one flat namespace.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .params import ParamStore, kaiming_uniform
from .tensor import Tensor

__all__ = ["Conv2d", "ConvTranspose2d", "LayerNorm", "Initializer"]


class Initializer:
    """Seeded weight initialization policy shared across a whole model."""

    def __init__(self, seed: int = 0, dtype=np.float64):
        self.rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype).type

    def conv_weight(self, shape, fan_in: int) -> np.ndarray:
        return kaiming_uniform(self.rng, shape, fan_in, self.dtype)

    def normal(self, shape, std: float) -> np.ndarray:
        return (self.rng.standard_normal(shape) * std).astype(self.dtype)

    def zeros(self, shape) -> np.ndarray:
        return np.zeros(shape, dtype=self.dtype)

    def ones(self, shape) -> np.ndarray:
        return np.ones(shape, dtype=self.dtype)


class Conv2d:
    def __init__(self, store: ParamStore, init: Initializer, name: str,
                 cin: int, cout: int, k: int, stride: int = 1, padding: int = 0,
                 groups: int = 1, bias: bool = True, zero_init: bool = False):
        fan_in = (cin // groups) * k * k
        wshape = (cout, cin // groups, k, k)
        wdata = init.zeros(wshape) if zero_init else init.conv_weight(wshape, fan_in)
        self.w = store.register(name + ".w", wdata)
        self.b = store.register(name + ".b", init.zeros((1, cout, 1, 1))) if bias else None
        self.stride, self.padding, self.groups = stride, padding, groups

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.w, self.b, stride=self.stride,
                          padding=self.padding, groups=self.groups)


class ConvTranspose2d:
    def __init__(self, store: ParamStore, init: Initializer, name: str,
                 cin: int, cout: int, k: int, stride: int = 1, padding: int = 0,
                 output_padding: int = 0, groups: int = 1, bias: bool = True):
        fan_in = (cout // groups) * k * k
        wshape = (cin, cout // groups, k, k)
        self.w = store.register(name + ".w", init.conv_weight(wshape, fan_in))
        self.b = store.register(name + ".b", init.zeros((1, cout, 1, 1))) if bias else None
        self.stride, self.padding = stride, padding
        self.output_padding, self.groups = output_padding, groups

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv_transpose2d(x, self.w, self.b, stride=self.stride,
                                    padding=self.padding, groups=self.groups,
                                    output_padding=self.output_padding)


class LayerNorm:
    """Channel-dimension layer norm with learnable affine."""

    def __init__(self, store: ParamStore, init: Initializer, name: str, channels: int):
        self.gamma = store.register(name + ".gamma", init.ones((1, channels, 1, 1)))
        self.beta = store.register(name + ".beta", init.zeros((1, channels, 1, 1)))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta)
