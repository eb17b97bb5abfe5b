"""Named parameter registry and the binary checkpoint container.

Checkpoint layout: magic "CPAE", version u32, then one entry per
parameter in lexicographic name order: name length u32, UTF-8 name,
dtype tag u8 (0 = f64, 1 = f32), 4 dims u32, little-endian payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import ConfigError, DimensionError, Tensor

__all__ = ["ParamStore", "kaiming_uniform", "save_checkpoint", "load_checkpoint"]

_MAGIC = b"CPAE"
_VERSION = 1
_DTYPE_TAGS = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}
_TAG_DTYPES = {0: np.float64, 1: np.float32}


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float64) -> np.ndarray:
    """He fan-in uniform init: U(-sqrt(6/fan_in), +sqrt(6/fan_in))."""
    bound = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class ParamStore:
    """Ordered map from parameter path to trainable tensor.

    Registration order is insertion order; serialization always sorts by
    name so checkpoints are deterministic regardless of build order.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def register(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ConfigError(f"parameter {name!r} registered twice")
        arr = np.asarray(data)
        if arr.ndim != 4:
            raise DimensionError(f"parameters must be 4-D, got {arr.shape} for {name!r}")
        t = Tensor(arr, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def num_scalars(self) -> int:
        return sum(t.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ConfigError(
                f"checkpoint/schema mismatch (missing={sorted(missing)}, extra={sorted(extra)})")
        for name, t in self._params.items():
            arr = np.asarray(state[name])
            if arr.shape != t.shape:
                raise DimensionError(
                    f"shape mismatch for {name!r}: checkpoint {arr.shape} vs model {t.shape}")
            t.data = arr.astype(t.data.dtype)
            t.grad = None


def save_checkpoint(store: ParamStore, path: str | Path) -> None:
    buf = bytearray()
    buf += _MAGIC
    buf += struct.pack("<I", _VERSION)
    for name in sorted(store.names()):
        t = store[name]
        data = np.ascontiguousarray(t.data)
        tag = _DTYPE_TAGS[data.dtype]
        encoded = name.encode("utf-8")
        buf += struct.pack("<I", len(encoded))
        buf += encoded
        buf += struct.pack("<B", tag)
        buf += struct.pack("<4I", *data.shape)
        buf += data.astype(data.dtype.newbyteorder("<")).tobytes()
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ConfigError(f"{path}: not a parameter checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != _VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    offset = 8
    out: dict[str, np.ndarray] = {}
    while offset < len(raw):
        (nlen,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        name = raw[offset:offset + nlen].decode("utf-8")
        offset += nlen
        (tag,) = struct.unpack_from("<B", raw, offset)
        offset += 1
        dims = struct.unpack_from("<4I", raw, offset)
        offset += 16
        dtype = np.dtype(_TAG_DTYPES[tag]).newbyteorder("<")
        count = int(np.prod(dims))
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
        offset += arr.nbytes
        out[name] = arr.astype(_TAG_DTYPES[tag]).reshape(dims)
    return out
