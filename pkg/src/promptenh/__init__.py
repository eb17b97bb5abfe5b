"""Prompt-conditioned image enhancement with a self-contained autodiff core."""

from .config import CpbConfig, EnhancerConfig, TrainConfig
from .gradcheck import GradCheckReport, grad_check
from .network import Enhancer, count_params
from .params import ParamStore, load_checkpoint, save_checkpoint
from .tensor import (ConfigError, DimensionError, NumericsError, Tensor,
                     set_default_dtype, set_strict, strict_mode)

__all__ = [
    "CpbConfig",
    "EnhancerConfig",
    "TrainConfig",
    "GradCheckReport",
    "grad_check",
    "Enhancer",
    "count_params",
    "ParamStore",
    "load_checkpoint",
    "save_checkpoint",
    "ConfigError",
    "DimensionError",
    "NumericsError",
    "Tensor",
    "set_default_dtype",
    "set_strict",
    "strict_mode",
]

__version__ = "0.1.0"
