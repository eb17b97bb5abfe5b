"""Registry of gradient-check cases covering every differentiable op.

Each case builds a scalar loss closure over a fresh parameter store so
the finite-difference harness can probe it independently. The CLI's
gradcheck subcommand runs the whole registry.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import ops
from .blocks import ContentPromptBlock, Gdfn, Mdta, SimplePromptBlock, split_channels
from .config import CpbConfig, EnhancerConfig
from .gradcheck import GradCheckReport, grad_check
from .layers import Initializer
from .network import Enhancer, RfaConv
from .params import ParamStore
from .prompts import PromptGenerator
from .tensor import Tensor, concat

__all__ = ["SUITE", "run_suite", "build_case"]


def _rand_param(store: ParamStore, rng, name: str, shape, scale: float = 0.5) -> Tensor:
    return store.register(name, (rng.standard_normal(shape) * scale))


def _case_conv2d(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    x = _rand_param(store, rng, "x", (1, 4, 6, 6))
    w = _rand_param(store, rng, "w", (3, 4, 3, 3))
    b = _rand_param(store, rng, "b", (1, 3, 1, 1))
    return lambda: (ops.conv2d(x, w, b, stride=1, padding=1) ** 2.0).sum(), store


def _case_conv2d_strided(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    x = _rand_param(store, rng, "x", (1, 4, 6, 6))
    w = _rand_param(store, rng, "w", (4, 2, 3, 3))
    return lambda: (ops.conv2d(x, w, stride=2, padding=1, groups=2) ** 2.0).sum(), store


def _case_depthwise(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    x = _rand_param(store, rng, "x", (1, 4, 6, 6))
    w = _rand_param(store, rng, "w", (4, 1, 3, 3))
    return lambda: (ops.conv2d(x, w, padding=1, groups=4) ** 2.0).sum(), store


def _case_conv_transpose(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    x = _rand_param(store, rng, "x", (1, 4, 4, 4))
    w = _rand_param(store, rng, "w", (4, 2, 3, 3))
    b = _rand_param(store, rng, "b", (1, 2, 1, 1))
    return lambda: (ops.conv_transpose2d(x, w, b, stride=2, padding=1,
                                         output_padding=1) ** 2.0).sum(), store


def _activation_case(kind: str):
    def build(seed: int):
        rng = np.random.default_rng(seed)
        store = ParamStore()
        x = _rand_param(store, rng, "x", (1, 4, 5, 5), scale=1.5)
        return lambda: (ops.activation(x, kind) * ops.activation(x, kind)).sum(), store

    return build


def _pool_case(kind: str):
    def build(seed: int):
        rng = np.random.default_rng(seed)
        store = ParamStore()
        x = _rand_param(store, rng, "x", (1, 4, 5, 5))
        return lambda: (ops.pool(x, kind) ** 2.0).sum(), store

    return build


def _case_layer_norm(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    x = _rand_param(store, rng, "x", (1, 4, 4, 4))
    gamma = _rand_param(store, rng, "gamma", (1, 4, 1, 1))
    beta = _rand_param(store, rng, "beta", (1, 4, 1, 1))
    return lambda: (ops.layer_norm(x, gamma, beta) ** 2.0).sum(), store


def _case_bilinear(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    x = _rand_param(store, rng, "x", (1, 3, 4, 5))
    return lambda: (ops.bilinear_rescale(x, 7, 3) ** 2.0).sum(), store


def _case_channel_shuffle(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    x = _rand_param(store, rng, "x", (1, 8, 3, 3))
    w = Tensor(rng.standard_normal((1, 8, 1, 1)))
    return lambda: (ops.channel_shuffle(x, 4) * w).sum() + \
        (ops.channel_shuffle(x, 4) ** 2.0).sum(), store


def _case_softmax(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    x = _rand_param(store, rng, "x", (1, 2, 4, 4), scale=1.5)
    w = Tensor(rng.standard_normal((1, 2, 4, 4)))
    return lambda: (ops.softmax(x, axis=-1) * w).sum(), store


def _case_mdta(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    init = Initializer(seed=seed)
    block = Mdta(store, init, "mdta", channels=4, heads=2)
    x = _rand_param(store, rng, "x", (1, 4, 4, 4))
    return lambda: (block(x) ** 2.0).sum(), store


def _case_mdta_sigmoid(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    init = Initializer(seed=seed)
    block = Mdta(store, init, "mdta", channels=4, heads=1, sigma_mode="sigmoid")
    x = _rand_param(store, rng, "x", (1, 4, 4, 4))
    return lambda: (block(x) ** 2.0).sum(), store


def _case_gdfn(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    init = Initializer(seed=seed)
    block = Gdfn(store, init, "gdfn", channels=4, expansion=2.0)
    x = _rand_param(store, rng, "x", (1, 4, 4, 4))
    return lambda: (block(x) ** 2.0).sum(), store


def _case_cpb(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    init = Initializer(seed=seed)
    cfg = CpbConfig(channels=8, splits=2, reduction=4, heads=1)
    block = ContentPromptBlock(store, init, "cpb", cfg)
    x = _rand_param(store, rng, "x", (1, 8, 8, 8), scale=0.3)
    prompt = _rand_param(store, rng, "prompt", (1, 8, 4, 4), scale=0.3)
    return lambda: (block(x, prompt) ** 2.0).sum(), store


def _case_spb(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    init = Initializer(seed=seed)
    block = SimplePromptBlock(store, init, "spb", channels=4)
    x = _rand_param(store, rng, "x", (1, 4, 6, 6))
    prompt = _rand_param(store, rng, "prompt", (1, 4, 3, 3))
    return lambda: (block(x, prompt) ** 2.0).sum(), store


def _case_rfa(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    init = Initializer(seed=seed)
    layer = RfaConv(store, init, "rfa", cin=3, cout=4, k=3)
    x = _rand_param(store, rng, "x", (1, 3, 6, 6))
    return lambda: (layer(x) ** 2.0).sum(), store


def _case_prompt_pyramid(seed: int):
    store = ParamStore()
    init = Initializer(seed=seed)
    gen = PromptGenerator(store, init, hat_h=2, hat_w=2, hat_c=8, mode="cot")
    return lambda: ((gen().p1 ** 2.0).sum() + (gen().p2 ** 2.0).sum()), store


def _case_split_concat(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    x = _rand_param(store, rng, "x", (1, 6, 4, 4))
    w = Tensor(rng.standard_normal((1, 6, 4, 4)))

    def loss():
        parts = split_channels(x, 3)
        return (concat([p * 2.0 for p in parts], axis=1) * w).sum() + (x ** 2.0).sum()

    return loss, store


SUITE: dict[str, Callable] = {
    "conv2d": _case_conv2d,
    "conv2d_grouped_strided": _case_conv2d_strided,
    "conv2d_depthwise": _case_depthwise,
    "conv_transpose2d": _case_conv_transpose,
    "relu": _activation_case("relu"),
    "gelu": _activation_case("gelu"),
    "hardswish": _activation_case("hardswish"),
    "sigmoid": _activation_case("sigmoid"),
    "gap_spatial": _pool_case("gap_spatial"),
    "gap_channel": _pool_case("gap_channel"),
    "gmp_channel": _pool_case("gmp_channel"),
    "layer_norm": _case_layer_norm,
    "bilinear_rescale": _case_bilinear,
    "channel_shuffle": _case_channel_shuffle,
    "softmax": _case_softmax,
    "split_concat": _case_split_concat,
    "mdta": _case_mdta,
    "mdta_sigmoid": _case_mdta_sigmoid,
    "gdfn": _case_gdfn,
    "cpb_block": _case_cpb,
    "spb_block": _case_spb,
    "rfa_conv": _case_rfa,
    "prompt_pyramid": _case_prompt_pyramid,
}


def build_case(name: str, seed: int = 0):
    return SUITE[name](seed)


def run_suite(tol: float = 1e-4, seed: int = 0, only: str | None = None,
              flip_op: str | None = None, max_samples: int = 64) -> list[GradCheckReport]:
    """Gradient-check every registered case; `flip_op` injects a sign fault."""
    reports = []
    for name, builder in SUITE.items():
        if only is not None and name != only:
            continue
        loss, store = builder(seed)
        reports.append(grad_check(loss, store, tol=tol, seed=seed, op_name=name,
                                  max_samples=max_samples,
                                  negate_analytic=(name == flip_op)))
    return reports


def enhancer_end_to_end_report(tol: float = 1e-4, seed: int = 0,
                               max_samples: int = 4) -> GradCheckReport:
    """Whole-network gradient check on a small configuration."""
    cfg = EnhancerConfig(base_channels=4, prompt_h=2, prompt_w=2, prompt_channels=32,
                         splits=2, reduction=4, heads=1, rfa_enabled=True)
    model = Enhancer(cfg, seed=seed)
    rng = np.random.default_rng(seed)
    img = Tensor(rng.uniform(0.2, 0.8, size=(1, 3, 16, 16)))
    target = Tensor(rng.uniform(0.0, 1.0, size=(1, 3, 16, 16)))

    def loss():
        out, _ = model.enhance(img)
        return ((out - target) ** 2.0).sum()

    return grad_check(loss, model.store, tol=tol, seed=seed,
                      op_name="enhancer_end_to_end", max_samples=max_samples)
