"""Prompt-conditioned feature blocks.

The content-driven block mixes channel and spatial attention into the
feature, gates it, injects the rescaled prompt, splits the result into n
independent transformer parts (channel-transposed attention followed by
a gated feed-forward), and concatenates the parts back. The simple
block used as an ablation baseline multiplies feature and prompt,
concatenates, and projects with a 1x1 convolution.
"""

from __future__ import annotations

from . import ops
from .config import CpbConfig
from .layers import Conv2d, Initializer, LayerNorm
from .params import ParamStore
from .tensor import ConfigError, Tensor, concat

__all__ = [
    "ChannelAttention",
    "SpatialAttention",
    "PromptFusion",
    "Mdta",
    "Gdfn",
    "ContentPromptBlock",
    "SimplePromptBlock",
    "split_channels",
]


def split_channels(x: Tensor, n: int) -> list[Tensor]:
    """Split N x C x H x W into n equal channel groups, in order."""
    c = x.shape[1]
    if c % n:
        raise ConfigError(f"splits={n} does not divide channels {c}")
    step = c // n
    return [x[:, j * step:(j + 1) * step] for j in range(n)]


class ChannelAttention:
    """Squeeze-style channel weights: 1x1(ReLU(1x1(GAP(f)))), no squashing."""

    def __init__(self, store: ParamStore, init: Initializer, name: str,
                 channels: int, reduction: int):
        if channels % reduction:
            raise ConfigError(f"reduction={reduction} does not divide channels {channels}")
        hidden = channels // reduction
        self.squeeze = Conv2d(store, init, name + ".squeeze", channels, hidden, k=1)
        self.expand = Conv2d(store, init, name + ".expand", hidden, channels, k=1)

    def __call__(self, f: Tensor) -> Tensor:
        return self.expand(ops.relu(self.squeeze(ops.gap_spatial(f))))


class SpatialAttention:
    """Per-position weights from pooled channel statistics, one map per channel."""

    def __init__(self, store: ParamStore, init: Initializer, name: str, channels: int):
        self.conv = Conv2d(store, init, name + ".conv", 2, channels, k=7, padding=3)

    def __call__(self, f: Tensor) -> Tensor:
        stats = concat([ops.gap_channel(f), ops.gmp_channel(f)], axis=1)
        return self.conv(stats)


class PromptFusion:
    """Attention mixing, gating, and prompt injection producing the fused feature."""

    def __init__(self, store: ParamStore, init: Initializer, name: str,
                 channels: int, reduction: int):
        c = channels
        self.channels = c
        self.ca = ChannelAttention(store, init, name + ".ca", c, reduction)
        self.sa = SpatialAttention(store, init, name + ".sa", c)
        # depthwise-separable 7x7 on the 2C concat, mapping back to C
        self.gate_dw = Conv2d(store, init, name + ".gate_dw", 2 * c, 2 * c, k=7,
                              padding=3, groups=2 * c)
        self.gate_pw = Conv2d(store, init, name + ".gate_pw", 2 * c, c, k=1)
        self.project = Conv2d(store, init, name + ".project", 2 * c, c, k=1)

    def __call__(self, f: Tensor, prompt: Tensor) -> Tensor:
        c, h, w = f.shape[1], f.shape[2], f.shape[3]
        if prompt.shape[1] != c:
            raise ConfigError(
                f"prompt channels {prompt.shape[1]} != feature channels {c}")
        mixed = concat([(self.ca(f) + self.sa(f)) * f, f], axis=1)
        gated = ops.sigmoid(self.gate_pw(self.gate_dw(ops.channel_shuffle(mixed, 2))))
        p = ops.bilinear_rescale(prompt, h, w)
        return self.project(concat([f, p + gated], axis=1))


class Mdta:
    """Transposed attention over channel descriptors within one split part.

    The attention matrix is d x d per head (d = part channels / heads) with
    the spatial extent as the contraction axis. Normalization is softmax
    by default; the sigmoid reading of the source formula is selectable.
    """

    def __init__(self, store: ParamStore, init: Initializer, name: str,
                 channels: int, heads: int = 1, sigma_mode: str = "softmax"):
        if channels % heads:
            raise ConfigError(f"heads={heads} does not divide channels {channels}")
        c = channels
        self.channels, self.heads, self.sigma_mode = c, heads, sigma_mode
        self.ln = LayerNorm(store, init, name + ".ln", c)
        for proj in ("q", "k", "v"):
            setattr(self, proj + "_pw", Conv2d(store, init, f"{name}.{proj}_pw", c, c, k=1))
            setattr(self, proj + "_dw", Conv2d(store, init, f"{name}.{proj}_dw", c, c, k=3,
                                               padding=1, groups=c))
        self.alpha = store.register(name + ".alpha", init.ones((1, heads, 1, 1)))
        self.out = Conv2d(store, init, name + ".out", c, c, k=1)

    def attention(self, x: Tensor) -> Tensor:
        """Normalized d x d attention map (exposed for verification)."""
        n, c, h, w = x.shape
        d, hw = c // self.heads, h * w
        ln = self.ln(x)
        q = self.q_dw(self.q_pw(ln)).reshape(n, self.heads, d, hw)
        k = self.k_dw(self.k_pw(ln)).reshape(n, self.heads, d, hw)
        logits = (q @ k.transpose(0, 1, 3, 2)) / self.alpha
        if self.sigma_mode == "sigmoid":
            return ops.sigmoid(logits)
        return ops.softmax(logits, axis=-1)

    def __call__(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        d, hw = c // self.heads, h * w
        attn = self.attention(x)
        v = self.v_dw(self.v_pw(self.ln(x))).reshape(n, self.heads, d, hw)
        mixed = (attn @ v).reshape(n, c, h, w)
        return self.out(mixed) + x


class Gdfn:
    """Gated two-branch feed-forward: PC(GELU(branch1) * branch2) + x."""

    def __init__(self, store: ParamStore, init: Initializer, name: str,
                 channels: int, expansion: float = 2.0):
        c = channels
        hidden = max(1, int(round(c * expansion)))
        self.ln = LayerNorm(store, init, name + ".ln", c)
        self.x1_pw = Conv2d(store, init, name + ".x1_pw", c, hidden, k=1)
        self.x1_dw = Conv2d(store, init, name + ".x1_dw", hidden, hidden, k=3,
                            padding=1, groups=hidden)
        self.x2_pw = Conv2d(store, init, name + ".x2_pw", c, hidden, k=1)
        self.x2_dw = Conv2d(store, init, name + ".x2_dw", hidden, hidden, k=3,
                            padding=1, groups=hidden)
        self.out = Conv2d(store, init, name + ".out", hidden, c, k=1)

    def __call__(self, x: Tensor) -> Tensor:
        ln = self.ln(x)
        x1 = ops.gelu(self.x1_dw(self.x1_pw(ln)))
        x2 = self.x2_dw(self.x2_pw(ln))
        return self.out(x1 * x2) + x


class ContentPromptBlock:
    """Fusion followed by n independent (attention + feed-forward) parts."""

    def __init__(self, store: ParamStore, init: Initializer, name: str, cfg: CpbConfig):
        cfg.validate()
        self.cfg = cfg
        self.fusion = PromptFusion(store, init, name + ".fuse", cfg.channels, cfg.reduction)
        part_c = cfg.channels // cfg.splits
        self.parts = []
        for j in range(cfg.splits):
            mdta = Mdta(store, init, f"{name}.part{j}.mdta", part_c,
                        heads=cfg.heads, sigma_mode=cfg.sigma_mode)
            gdfn = Gdfn(store, init, f"{name}.part{j}.gdfn", part_c,
                        expansion=cfg.expansion)
            self.parts.append((mdta, gdfn))

    def __call__(self, f: Tensor, prompt: Tensor) -> Tensor:
        fused = self.fusion(f, prompt)
        parts = split_channels(fused, self.cfg.splits)
        outs = [gdfn(mdta(part)) for part, (mdta, gdfn) in zip(parts, self.parts)]
        return concat(outs, axis=1)


class SimplePromptBlock:
    """Ablation baseline: multiply by the prompt, concat, 1x1 projection."""

    def __init__(self, store: ParamStore, init: Initializer, name: str, channels: int):
        self.channels = channels
        self.project = Conv2d(store, init, name + ".project", 2 * channels, channels, k=1)

    def __call__(self, f: Tensor, prompt: Tensor) -> Tensor:
        if prompt.shape[1] != f.shape[1]:
            raise ConfigError(
                f"prompt channels {prompt.shape[1]} != feature channels {f.shape[1]}")
        p = ops.bilinear_rescale(prompt, f.shape[2], f.shape[3])
        return self.project(concat([f, f * p], axis=1))
