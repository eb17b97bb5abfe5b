"""Dense 4-D tensors with reverse-mode automatic differentiation.

Everything downstream (prompt blocks, the encoder-decoder, training) is
built from the primitives defined here and in :mod:`promptenh.ops`.
Gradients are accumulated on a tape of closures and released by
:meth:`Tensor.backward`; see :mod:`promptenh.gradcheck` for the
finite-difference harness that validates every primitive.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "DimensionError",
    "ConfigError",
    "NumericsError",
    "set_strict",
    "strict_enabled",
    "strict_mode",
    "default_dtype",
    "set_default_dtype",
    "concat",
]


class DimensionError(ValueError):
    """Tensor shapes are inconsistent for the requested operation."""


class ConfigError(ValueError):
    """An operation was configured with invalid parameters."""


class NumericsError(FloatingPointError):
    """A non-finite value appeared while strict mode is enabled."""


_STRICT = True
_DEFAULT_DTYPE = np.float64


def set_strict(enabled: bool) -> None:
    global _STRICT
    _STRICT = bool(enabled)


def strict_enabled() -> bool:
    return _STRICT


@contextlib.contextmanager
def strict_mode(enabled: bool):
    """Temporarily toggle NaN/Inf checking on op outputs."""
    global _STRICT
    prev = _STRICT
    _STRICT = bool(enabled)
    try:
        yield
    finally:
        _STRICT = prev


def default_dtype():
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ConfigError("element type must be float32 or float64")
    _DEFAULT_DTYPE = dtype


def _check_finite(data: np.ndarray) -> None:
    if _STRICT and not np.all(np.isfinite(data)):
        raise NumericsError("non-finite value in op output (strict mode)")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A numpy-backed array node participating in reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (),
                 backward=None, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name
        _check_finite(arr)

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # -- autodiff machinery ---------------------------------------------------

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype)
        else:
            self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Run reverse-mode accumulation from this node.

        Without an explicit `grad` the tensor must be scalar-valued.
        """
        if grad is None:
            if self.size != 1:
                raise DimensionError("backward() without grad requires a scalar")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zeros(shape, dtype=None) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=dtype or _DEFAULT_DTYPE))

    @staticmethod
    def ones(shape, dtype=None) -> "Tensor":
        return Tensor(np.ones(shape, dtype=dtype or _DEFAULT_DTYPE))

    @staticmethod
    def full(shape, value, dtype=None) -> "Tensor":
        return Tensor(np.full(shape, value, dtype=dtype or _DEFAULT_DTYPE))

    # -- arithmetic -------------------------------------------------------------

    def _binary(self, other, fwd, bwd_a, bwd_b) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.data.dtype))
        out_data = fwd(self.data, other.data)
        req = self.requires_grad or other.requires_grad
        out = Tensor(out_data, requires_grad=req, parents=(self, other))

        def backward(g):
            if self.requires_grad or self._parents:
                self._accumulate(_unbroadcast(bwd_a(g, self.data, other.data, out_data), self.shape))
            if other.requires_grad or other._parents:
                other._accumulate(_unbroadcast(bwd_b(g, self.data, other.data, out_data), other.shape))

        out._backward = backward
        return out

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b,
                            lambda g, a, b, o: g, lambda g, a, b, o: g)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b,
                            lambda g, a, b, o: g, lambda g, a, b, o: -g)

    def __rsub__(self, other):
        return Tensor(np.asarray(other, dtype=self.data.dtype)) - self

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b,
                            lambda g, a, b, o: g * b, lambda g, a, b, o: g * a)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, lambda a, b: a / b,
                            lambda g, a, b, o: g / b,
                            lambda g, a, b, o: -g * a / (b * b))

    def __rtruediv__(self, other):
        return Tensor(np.asarray(other, dtype=self.data.dtype)) / self

    def __neg__(self):
        return self * -1.0

    def __pow__(self, exponent: float):
        if isinstance(exponent, Tensor):
            raise ConfigError("tensor exponents are not supported")
        e = float(exponent)
        out = Tensor(self.data ** e, requires_grad=self.requires_grad, parents=(self,))

        def backward(g):
            self._accumulate(g * e * self.data ** (e - 1.0))

        out._backward = backward
        return out

    # -- unary / reduction ops -----------------------------------------------

    def _unary(self, fwd, dfn) -> "Tensor":
        out_data = fwd(self.data)
        out = Tensor(out_data, requires_grad=self.requires_grad, parents=(self,))

        def backward(g):
            self._accumulate(g * dfn(self.data, out_data))

        out._backward = backward
        return out

    def exp(self) -> "Tensor":
        return self._unary(np.exp, lambda x, o: o)

    def sqrt(self) -> "Tensor":
        return self._unary(np.sqrt, lambda x, o: 0.5 / o)

    def abs(self) -> "Tensor":
        return self._unary(np.abs, lambda x, o: np.sign(x))

    def clamp(self, lo: float, hi: float) -> "Tensor":
        return self._unary(lambda x: np.clip(x, lo, hi),
                           lambda x, o: ((x > lo) & (x < hi)).astype(x.dtype))

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        out = Tensor(out_data, requires_grad=self.requires_grad, parents=(self,))
        shape = self.shape

        def backward(g):
            gg = np.asarray(g)
            if axis is not None and not keepdims:
                axes = (axis,) if isinstance(axis, int) else tuple(axis)
                axes = tuple(a % len(shape) for a in axes)
                gg = np.expand_dims(gg, tuple(sorted(axes)))
            self._accumulate(np.broadcast_to(gg, shape).copy())

        out._backward = backward
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def amax(self, axis: int, keepdims: bool = False) -> "Tensor":
        out_data = self.data.max(axis=axis, keepdims=keepdims)
        out = Tensor(out_data, requires_grad=self.requires_grad, parents=(self,))

        def backward(g):
            full = self.data.max(axis=axis, keepdims=True)
            mask = (self.data == full).astype(self.data.dtype)
            mask /= mask.sum(axis=axis, keepdims=True)
            gg = np.asarray(g)
            if not keepdims:
                gg = np.expand_dims(gg, axis)
            self._accumulate(mask * gg)

        out._backward = backward
        return out

    # -- shape manipulation -----------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), requires_grad=self.requires_grad, parents=(self,))
        src = self.shape

        def backward(g):
            self._accumulate(g.reshape(src))

        out._backward = backward
        return out

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        out = Tensor(self.data.transpose(axes), requires_grad=self.requires_grad, parents=(self,))
        inv = np.argsort(axes)

        def backward(g):
            self._accumulate(g.transpose(inv))

        out._backward = backward
        return out

    def __getitem__(self, key) -> "Tensor":
        out = Tensor(self.data[key], requires_grad=self.requires_grad, parents=(self,))
        shape = self.shape

        def backward(g):
            buf = np.zeros(shape, dtype=self.data.dtype)
            np.add.at(buf, key, g)
            self._accumulate(buf)

        out._backward = backward
        return out

    def matmul(self, other: "Tensor") -> "Tensor":
        return self._binary(
            other,
            np.matmul,
            lambda g, a, b, o: np.matmul(g, np.swapaxes(b, -1, -2)),
            lambda g, a, b, o: np.matmul(np.swapaxes(a, -1, -2), g),
        )

    __matmul__ = matmul


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Concatenate tensors along `axis`; backward slices the gradient back."""
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat of empty sequence")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    req = any(t.requires_grad for t in tensors)
    out = Tensor(out_data, requires_grad=req, parents=tuple(tensors))
    sizes = [t.shape[axis] for t in tensors]

    def backward(g):
        offset = 0
        for t, s in zip(tensors, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offset, offset + s)
            t._accumulate(g[tuple(idx)])
            offset += s

    out._backward = backward
    return out
