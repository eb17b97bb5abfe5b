"""Learnable prompt pyramid.

The level-3 prompt is a learnable tensor of shape 1 x C x H x W; levels 2
and 1 are produced by chained stride-2 transposed 3x3 convolutions with
Hardswish after each stage, doubling the spatial size and halving the
channels per stage. Shape law: level i has channels C/2^(3-i) at
2^(3-i)*H x 2^(3-i)*W.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import ops
from .layers import ConvTranspose2d, Initializer
from .params import ParamStore
from .tensor import ConfigError, Tensor

__all__ = ["PromptPyramid", "PromptGenerator", "pyramid_shapes"]

_P3_INIT_STD = 0.02


def pyramid_shapes(hat_h: int, hat_w: int, hat_c: int) -> dict[int, tuple[int, int, int, int]]:
    """Expected 1 x C x H x W shape of each pyramid level."""
    if hat_c % 4:
        raise ConfigError("initial prompt channels must be divisible by 4")
    return {i: (1, hat_c // 2 ** (3 - i), hat_h * 2 ** (3 - i), hat_w * 2 ** (3 - i))
            for i in (3, 2, 1)}


@dataclass
class PromptPyramid:
    p3: Tensor
    p2: Tensor
    p1: Tensor
    hat_h: int
    hat_w: int
    hat_c: int

    def level(self, i: int) -> Tensor:
        return {3: self.p3, 2: self.p2, 1: self.p1}[i]

    def check_shapes(self) -> None:
        expect = pyramid_shapes(self.hat_h, self.hat_w, self.hat_c)
        for i in (3, 2, 1):
            if self.level(i).shape != expect[i]:
                raise ConfigError(
                    f"prompt level {i} has shape {self.level(i).shape}, expected {expect[i]}")


class PromptGenerator:
    """Owns the prompt parameters and produces the three-level pyramid.

    `mode="cot"` chains two transposed convolutions from the initial
    prompt; `mode="independent"` learns all three levels separately (the
    ablation baseline); `mode="none"` is handled by the caller.
    """

    def __init__(self, store: ParamStore, init: Initializer, hat_h: int, hat_w: int,
                 hat_c: int, mode: str = "cot", prefix: str = "cgm"):
        if mode not in ("cot", "independent"):
            raise ConfigError(f"unknown prompt mode {mode!r}")
        shapes = pyramid_shapes(hat_h, hat_w, hat_c)
        self.hat_h, self.hat_w, self.hat_c = hat_h, hat_w, hat_c
        self.mode = mode
        self.p3 = store.register(f"{prefix}.p3", init.normal(shapes[3], _P3_INIT_STD))
        if mode == "cot":
            self.tc2 = ConvTranspose2d(store, init, f"{prefix}.tc2", hat_c, hat_c // 2,
                                       k=3, stride=2, padding=1, output_padding=1)
            self.tc1 = ConvTranspose2d(store, init, f"{prefix}.tc1", hat_c // 2, hat_c // 4,
                                       k=3, stride=2, padding=1, output_padding=1)
        else:
            self.p2 = store.register(f"{prefix}.p2", init.normal(shapes[2], _P3_INIT_STD))
            self.p1 = store.register(f"{prefix}.p1", init.normal(shapes[1], _P3_INIT_STD))

    def __call__(self) -> PromptPyramid:
        if self.mode == "cot":
            p2 = ops.hardswish(self.tc2(self.p3))
            p1 = ops.hardswish(self.tc1(p2))
        else:
            p2, p1 = self.p2, self.p1
        pyr = PromptPyramid(p3=self.p3, p2=p2, p1=p1,
                            hat_h=self.hat_h, hat_w=self.hat_w, hat_c=self.hat_c)
        pyr.check_shapes()
        return pyr
