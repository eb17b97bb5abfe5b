"""The prompt-adaptive enhancer: 4-level encoder-decoder with prompt blocks.

The encoder triples stride-2 downsampling (channels C -> 2C -> 4C -> 8C,
latent at H/8); the decoder upsamples back with skip fusion and applies a
prompt block at each of its three levels (channels 8C, 4C, 2C, matching
the prompt pyramid). The enhanced image is the residual sum
out = clamp(input + correction, 0, 1); the final projection is
initialized at a reduced scale so a fresh model starts near the identity
(or exactly at it with ``final_zero_init``).
"""

from __future__ import annotations

import numpy as np

from . import ops
from .blocks import ContentPromptBlock, SimplePromptBlock
from .config import EnhancerConfig
from .layers import Conv2d, ConvTranspose2d, Initializer
from .params import ParamStore
from .prompts import PromptGenerator
from .tensor import ConfigError, Tensor, concat, strict_mode

__all__ = ["RfaConv", "Enhancer", "count_params"]


class RfaConv:
    """Receptive-field attention convolution (simplified re-derivation).

    Per output position, k*k logits computed from an average-pooled
    channelwise 1x1 path are softmax-normalized over the window axis and
    weight the unfolded k*k receptive field before a pointwise
    aggregation. With `attention=False` this is a plain k x k conv.
    """

    def __init__(self, store: ParamStore, init: Initializer, name: str,
                 cin: int, cout: int, k: int = 3, attention: bool = True,
                 zero_init: bool = False):
        if k % 2 == 0:
            raise ConfigError("receptive-field attention requires an odd kernel")
        self.cin, self.k, self.attention = cin, k, attention
        if not attention:
            self.plain = Conv2d(store, init, name + ".conv", cin, cout, k,
                                padding=k // 2, zero_init=zero_init)
            return
        # fixed uniform depthwise kernel implementing the k x k average pool
        self._pool_w = Tensor(np.full((cin, 1, k, k), 1.0 / (k * k), dtype=init.dtype))
        self.logits = Conv2d(store, init, name + ".logits", cin, cin * k * k, k=1,
                             groups=cin)
        self.aggregate = Conv2d(store, init, name + ".aggregate", cin * k * k, cout,
                                k=1, zero_init=zero_init)

    def __call__(self, x: Tensor) -> Tensor:
        if not self.attention:
            return self.plain(x)
        k = self.k
        n, c, h, w = x.shape
        pooled = ops.conv2d(x, self._pool_w, stride=1, padding=k // 2, groups=c)
        logits = self.logits(pooled).reshape(n, c, k * k, h, w)
        weights = ops.softmax(logits, axis=2)
        fields = ops.unfold(x, k, stride=1, padding=k // 2).reshape(n, c, k * k, h, w)
        # scale the convex window weights to mean 1 so uniform attention
        # reproduces plain-conv input statistics (keeps signal magnitude
        # stable through stacked layers)
        weighted = (fields * (weights * float(k * k))).reshape(n, c * k * k, h, w)
        return self.aggregate(weighted)

    def window_weights(self, x: Tensor) -> Tensor:
        """Softmax window weights (N x C x k*k x H x W), for verification."""
        if not self.attention:
            raise ConfigError("attention is disabled for this layer")
        k, (n, c, h, w) = self.k, x.shape
        pooled = ops.conv2d(x, self._pool_w, stride=1, padding=k // 2, groups=c)
        return ops.softmax(self.logits(pooled).reshape(n, c, k * k, h, w), axis=2)

    def out_weight(self) -> Tensor:
        """The weight tensor the output is linear in (bias excluded)."""
        return self.aggregate.w if self.attention else self.plain.w


class Enhancer:
    """Assembled model; owns its parameter store and prompt generator."""

    def __init__(self, cfg: EnhancerConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        dtype = np.float64 if cfg.elem_type == "f64" else np.float32
        self.store = ParamStore()
        init = Initializer(seed=seed, dtype=dtype)
        self.dtype = dtype
        c = cfg.base_channels
        rfa = cfg.rfa_enabled
        st, iz = self.store, init

        self.embed = RfaConv(st, iz, "net.embed", 3, c, 3, attention=rfa)
        self.enc = [RfaConv(st, iz, f"net.enc{i}", c * 2 ** (i - 1), c * 2 ** (i - 1), 3,
                            attention=rfa) for i in (1, 2, 3)]
        self.down = [Conv2d(st, iz, f"net.down{i}", c * 2 ** (i - 1), c * 2 ** i, k=3,
                            stride=2, padding=1) for i in (1, 2, 3)]
        self.latent = RfaConv(st, iz, "net.latent", 8 * c, 8 * c, 3, attention=rfa)

        self.up = {3: ConvTranspose2d(st, iz, "net.up3", 8 * c, 4 * c, k=2, stride=2),
                   2: ConvTranspose2d(st, iz, "net.up2", 4 * c, 2 * c, k=2, stride=2),
                   1: ConvTranspose2d(st, iz, "net.up1", 2 * c, 2 * c, k=2, stride=2)}
        self.skip_fuse = {3: Conv2d(st, iz, "net.skip3", 8 * c, 4 * c, k=1),
                          2: Conv2d(st, iz, "net.skip2", 4 * c, 2 * c, k=1),
                          1: Conv2d(st, iz, "net.skip1", 3 * c, 2 * c, k=1)}
        self.final = RfaConv(st, iz, "net.final", 2 * c, 3, 3, attention=rfa,
                             zero_init=cfg.final_zero_init)

        self.prompt_gen = None
        self.prompt_blocks: dict[int, object] = {}
        self.adapters: dict[int, Conv2d] = {}
        if cfg.prompt_mode != "none":
            self.prompt_gen = PromptGenerator(st, iz, cfg.prompt_h, cfg.prompt_w,
                                              cfg.prompt_channels, mode=cfg.prompt_mode)
            for level in (3, 2, 1):
                feat_c = cfg.decoder_channels(level)
                prompt_c = cfg.prompt_level_channels(level)
                if prompt_c != feat_c:
                    # pointwise adapter reconciling prompt/feature channel counts
                    self.adapters[level] = Conv2d(st, iz, f"cgm.adapter{level}",
                                                  prompt_c, feat_c, k=1)
                if cfg.block_type == "cpb":
                    self.prompt_blocks[level] = ContentPromptBlock(
                        st, iz, f"cpb.L{level}", cfg.cpb_config(level))
                else:
                    self.prompt_blocks[level] = SimplePromptBlock(
                        st, iz, f"spb.L{level}", feat_c)

        if cfg.calibrated_init:
            self._calibrate_init(seed)
        if not cfg.final_zero_init and cfg.final_init_scale != 1.0:
            # keep the fresh model close to the identity without cutting
            # the gradient path through the final projection
            self.final.out_weight().data *= cfg.final_init_scale

    def _calibrate_init(self, seed: int) -> None:
        """Rescale each linear stage so a smooth probe keeps unit magnitude.

        Stacked convolutions without interleaved normalization amplify (or
        shrink) spatially correlated signals by large factors under generic
        fan-in-based initialization; one deterministic probe pass dividing
        each stage's output weight by its observed output scale fixes the
        forward and gradient magnitudes at the start of training.
        """
        rng = np.random.default_rng((seed + 1) * 7919)
        coarse = Tensor(rng.uniform(-1.0, 1.0, size=(2, 3, 4, 4)).astype(self.dtype))
        probe = ops.bilinear_rescale(coarse, 32, 32)

        def unit(layer_weight: Tensor, out: Tensor) -> Tensor:
            s = float(out.data.std())
            if s > 0:
                layer_weight.data /= s
                return out * (1.0 / s)
            return out

        with strict_mode(False):
            f0 = unit(self.embed.out_weight(), self.embed(probe))
            e1 = unit(self.enc[0].out_weight(), self.enc[0](f0))
            e2 = unit(self.enc[1].out_weight(),
                      self.enc[1](unit(self.down[0].w, self.down[0](e1))))
            e3 = unit(self.enc[2].out_weight(),
                      self.enc[2](unit(self.down[1].w, self.down[1](e2))))
            d3 = unit(self.latent.out_weight(),
                      self.latent(unit(self.down[2].w, self.down[2](e3))))
            if self.prompt_gen is not None:
                self._pyramid = self.prompt_gen()
                d3 = self.prompt_blocks[3](d3, self._prompt(3))
            d2 = unit(self.skip_fuse[3].w,
                      self.skip_fuse[3](concat([unit(self.up[3].w, self.up[3](d3)), e3],
                                               axis=1)))
            if 2 in self.prompt_blocks:
                d2 = self.prompt_blocks[2](d2, self._prompt(2))
            d1 = unit(self.skip_fuse[2].w,
                      self.skip_fuse[2](concat([unit(self.up[2].w, self.up[2](d2)), e2],
                                               axis=1)))
            if 1 in self.prompt_blocks:
                d1 = self.prompt_blocks[1](d1, self._prompt(1))
            f_h = unit(self.skip_fuse[1].w,
                       self.skip_fuse[1](concat([unit(self.up[1].w, self.up[1](d1)), e1],
                                                axis=1)))
            if not self.cfg.final_zero_init:
                unit(self.final.out_weight(), self.final(f_h))

    # -- forward -------------------------------------------------------------

    def _prompt(self, level: int) -> Tensor:
        pyramid = self._pyramid
        p = pyramid.level(level)
        if level in self.adapters:
            p = self.adapters[level](p)
        return p

    def forward_features(self, x: Tensor) -> tuple[Tensor, dict[int, Tensor]]:
        """Run the encoder-decoder; returns (correction, per-level block outputs)."""
        if x.shape[2] % 8 or x.shape[3] % 8:
            raise ConfigError("spatial dims must be divisible by 8 (use enhance())")
        if self.prompt_gen is not None:
            self._pyramid = self.prompt_gen()
        feats: dict[int, Tensor] = {}

        f0 = self.embed(x)
        e1 = self.enc[0](f0)
        e2 = self.enc[1](self.down[0](e1))
        e3 = self.enc[2](self.down[1](e2))
        latent = self.latent(self.down[2](e3))

        d3 = latent
        if 3 in self.prompt_blocks:
            d3 = self.prompt_blocks[3](d3, self._prompt(3))
        feats[3] = d3

        d2 = self.skip_fuse[3](concat([self.up[3](d3), e3], axis=1))
        if 2 in self.prompt_blocks:
            d2 = self.prompt_blocks[2](d2, self._prompt(2))
        feats[2] = d2

        d1 = self.skip_fuse[2](concat([self.up[2](d2), e2], axis=1))
        if 1 in self.prompt_blocks:
            d1 = self.prompt_blocks[1](d1, self._prompt(1))
        feats[1] = d1

        f_h = self.skip_fuse[1](concat([self.up[1](d1), e1], axis=1))
        return self.final(f_h), feats

    def enhance(self, img: Tensor) -> tuple[Tensor, dict[int, Tensor]]:
        """Residual enhancement of an N x 3 x H x W batch in [0, 1].

        Non-multiple-of-8 sizes are zero-padded before the network and
        cropped after, so any desk-scale size is accepted.
        """
        n, _, h, w = img.shape
        pad_h = (-h) % 8
        pad_w = (-w) % 8
        x = ops.pad2d(img, 0, pad_h, 0, pad_w) if (pad_h or pad_w) else img
        correction, feats = self.forward_features(x)
        if pad_h or pad_w:
            correction = correction[:, :, :h, :w]
        return (img + correction).clamp(0.0, 1.0), feats

    def __call__(self, img: Tensor) -> Tensor:
        return self.enhance(img)[0]


def count_params(cfg: EnhancerConfig) -> int:
    """Exact learnable-scalar count for a configuration."""
    return Enhancer(cfg, seed=0).store.num_scalars()
