"""Architecture and training hyperparameter records (JSON-serializable)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .tensor import ConfigError

__all__ = ["CpbConfig", "EnhancerConfig", "TrainConfig"]


@dataclass
class CpbConfig:
    """Per-level prompt-block configuration."""

    channels: int
    splits: int = 4
    reduction: int = 16
    heads: int = 1
    expansion: float = 2.0
    sigma_mode: str = "softmax"  # or "sigmoid"

    def validate(self) -> None:
        if self.channels % self.splits:
            raise ConfigError(f"splits={self.splits} must divide channels={self.channels}")
        if self.channels % self.reduction:
            raise ConfigError(f"reduction={self.reduction} must divide channels={self.channels}")
        if (self.channels // self.splits) % self.heads:
            raise ConfigError(f"heads={self.heads} must divide part channels "
                              f"{self.channels // self.splits}")
        if self.sigma_mode not in ("softmax", "sigmoid"):
            raise ConfigError(f"unknown sigma_mode {self.sigma_mode!r}")


@dataclass
class EnhancerConfig:
    """Full architecture description.

    The default base_channels/prompt_channels pair (16, 128) makes the
    decoder channel schedule (8C, 4C, 2C) coincide with the prompt
    pyramid channels (128, 64, 32), so no channel adapters are needed.
    """

    base_channels: int = 16
    prompt_h: int = 32
    prompt_w: int = 32
    prompt_channels: int = 128
    splits: int = 4
    reduction: int = 16
    heads: int = 1
    expansion: float = 2.0
    sigma_mode: str = "softmax"
    rfa_enabled: bool = True
    final_zero_init: bool = False  # zero final projection -> identity model
    final_init_scale: float = 0.005  # shrink factor for the final projection init
    calibrated_init: bool = True  # probe-based per-stage init rescaling
    elem_type: str = "f64"  # or "f32"
    prompt_mode: str = "cot"  # "cot" | "independent" | "none"
    block_type: str = "cpb"  # "cpb" | "spb"
    levels: int = 4

    def validate(self) -> None:
        if self.levels != 4:
            raise ConfigError("the encoder-decoder is fixed at 4 levels")
        if self.base_channels < 1:
            raise ConfigError("base_channels must be >= 1")
        if self.prompt_channels % 4:
            raise ConfigError("prompt_channels must be divisible by 4")
        if self.elem_type not in ("f32", "f64"):
            raise ConfigError(f"unknown elem_type {self.elem_type!r}")
        if self.prompt_mode not in ("cot", "independent", "none"):
            raise ConfigError(f"unknown prompt_mode {self.prompt_mode!r}")
        if self.block_type not in ("cpb", "spb"):
            raise ConfigError(f"unknown block_type {self.block_type!r}")
        for level in (3, 2, 1):
            if self.block_type == "cpb":
                self.cpb_config(level).validate()

    def decoder_channels(self, level: int) -> int:
        """Channels of the decoder feature the level-`level` prompt block sees."""
        return {3: 8, 2: 4, 1: 2}[level] * self.base_channels

    def prompt_level_channels(self, level: int) -> int:
        return self.prompt_channels // 2 ** (3 - level)

    def cpb_config(self, level: int) -> CpbConfig:
        return CpbConfig(channels=self.decoder_channels(level), splits=self.splits,
                         reduction=self.reduction, heads=self.heads,
                         expansion=self.expansion, sigma_mode=self.sigma_mode)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @staticmethod
    def load(path: str | Path) -> "EnhancerConfig":
        cfg = EnhancerConfig(**json.loads(Path(path).read_text()))
        cfg.validate()
        return cfg


@dataclass
class TrainConfig:
    """Toy training hyperparameters (SGD with momentum + weight decay)."""

    lr: float = 0.001
    weight_decay: float = 0.0005
    momentum: float = 0.9
    batch: int = 4
    iters: int = 200
    seed: int = 0
    kinds: tuple = ("fog", "dark", "snow", "rain")

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if self.iters < 0:
            raise ConfigError("iters must be >= 0")

    def save(self, path: str | Path) -> None:
        out = asdict(self)
        out["kinds"] = list(self.kinds)
        Path(path).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")

    @staticmethod
    def load(path: str | Path) -> "TrainConfig":
        obj = json.loads(Path(path).read_text())
        if "kinds" in obj:
            obj["kinds"] = tuple(obj["kinds"])
        cfg = TrainConfig(**obj)
        cfg.validate()
        return cfg
