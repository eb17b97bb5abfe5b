"""Neural-network operations over :class:`promptenh.tensor.Tensor`.

Convolutions use explicit patch extraction (im2col) with a fully
vectorized grouped contraction; transposed convolution is implemented as
the exact adjoint of the forward convolution, so the two share the same
col2im/im2col kernels.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .tensor import ConfigError, DimensionError, Tensor, concat

__all__ = [
    "conv2d",
    "conv_transpose2d",
    "unfold",
    "activation",
    "relu",
    "gelu",
    "hardswish",
    "sigmoid",
    "pool",
    "gap_spatial",
    "gap_channel",
    "gmp_channel",
    "layer_norm",
    "bilinear_rescale",
    "channel_shuffle",
    "softmax",
    "pad2d",
]


# -- im2col / col2im kernels ---------------------------------------------------

def _out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """(N,C,H,W) -> (N, C, k, k, Ho, Wo) patches."""
    n, c, h, w = x.shape
    ho, wo = _out_size(h, k, stride, pad), _out_size(w, k, stride, pad)
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv output would be empty for input {x.shape}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    view = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    # (N, C, Ho, Wo, k, k) strided view -> (N, C, k, k, Ho, Wo)
    return view[:, :, ::stride, ::stride].transpose(0, 1, 4, 5, 2, 3)


def _col2im(cols: np.ndarray, x_shape, k: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add patches back into an image."""
    n, c, h, w = x_shape
    ho, wo = cols.shape[-2:]
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    return xp[:, :, pad:pad + h, pad:pad + w] if pad else xp


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, pad: int, groups: int) -> np.ndarray:
    n, cin, _, _ = x.shape
    cout, cig, k, _ = w.shape
    cols = _im2col(x, k, stride, pad)
    ho, wo = cols.shape[-2:]
    cols = cols.reshape(n, groups, cig * k * k, ho * wo)
    wg = w.reshape(groups, cout // groups, cig * k * k)
    out = np.matmul(wg, cols)
    return out.reshape(n, cout, ho, wo)


def _conv_grad_input(gy: np.ndarray, w: np.ndarray, x_shape, stride: int, pad: int,
                     groups: int) -> np.ndarray:
    n = gy.shape[0]
    cout, cig, k, _ = w.shape
    ho, wo = gy.shape[-2:]
    wg = w.reshape(groups, cout // groups, cig * k * k)
    gyg = gy.reshape(n, groups, cout // groups, ho * wo)
    gcols = np.matmul(wg.swapaxes(-1, -2), gyg)
    gcols = gcols.reshape(n, x_shape[1], k, k, ho, wo)
    return _col2im(gcols, x_shape, k, stride, pad)


def _conv_grad_weight(x: np.ndarray, gy: np.ndarray, w_shape, stride: int, pad: int,
                      groups: int) -> np.ndarray:
    n = x.shape[0]
    cout, cig, k, _ = w_shape
    cols = _im2col(x, k, stride, pad)
    ho, wo = cols.shape[-2:]
    cols = cols.reshape(n, groups, cig * k * k, ho * wo)
    gyg = gy.reshape(n, groups, cout // groups, ho * wo)
    gw = np.matmul(gyg, cols.swapaxes(-1, -2)).sum(axis=0)
    return gw.reshape(w_shape)


def _validate_conv(x: Tensor, w: Tensor, stride: int, groups: int, transposed: bool) -> None:
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError("conv2d expects 4-D input and weight")
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    if groups < 1:
        raise ConfigError("groups must be >= 1")
    cin = x.shape[1]
    if cin % groups:
        raise ConfigError(f"groups={groups} does not divide input channels {cin}")
    if transposed:
        if w.shape[0] != cin:
            raise DimensionError(
                f"transposed weight leading dim {w.shape[0]} != input channels {cin}")
    else:
        if w.shape[1] != cin // groups:
            raise DimensionError(
                f"weight expects {w.shape[1] * groups} input channels, got {cin}")
        if w.shape[0] % groups:
            raise ConfigError("output channels not divisible by groups")


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
           padding: int = 0, groups: int = 1, transposed: bool = False,
           output_padding: int = 0) -> Tensor:
    """2-D (transposed) cross-correlation.

    Weight layout: (C_out, C_in/groups, k, k) for the forward direction and
    (C_in, C_out/groups, k, k) when `transposed`. In the transposed case
    `stride` acts as the upsampling factor.
    """
    if transposed:
        return conv_transpose2d(x, w, b, stride=stride, padding=padding,
                                groups=groups, output_padding=output_padding)
    _validate_conv(x, w, stride, groups, transposed=False)
    out_data = _conv_forward(x.data, w.data, stride, padding, groups)
    if b is not None:
        out_data = out_data + b.data.reshape(1, -1, 1, 1)
    parents = (x, w) if b is None else (x, w, b)
    out = Tensor(out_data, requires_grad=any(p.requires_grad for p in parents),
                 parents=parents)
    x_shape, w_shape = x.shape, w.shape

    def backward(g):
        x._accumulate(_conv_grad_input(g, w.data, x_shape, stride, padding, groups))
        w._accumulate(_conv_grad_weight(x.data, g, w_shape, stride, padding, groups))
        if b is not None:
            b._accumulate(g.sum(axis=(0, 2, 3)).reshape(b.shape))

    out._backward = backward
    return out


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
                     padding: int = 0, groups: int = 1, output_padding: int = 0) -> Tensor:
    """Transposed convolution: the adjoint of `conv2d` with the same geometry."""
    _validate_conv(x, w, stride, groups, transposed=True)
    if output_padding < 0 or output_padding >= stride:
        raise ConfigError("output_padding must satisfy 0 <= op < stride")
    n, cin, h, wi = x.shape
    _, cog, k, _ = w.shape
    cout = cog * groups
    ho = (h - 1) * stride - 2 * padding + k + output_padding
    wo = (wi - 1) * stride - 2 * padding + k + output_padding
    out_shape = (n, cout, ho, wo)
    out_data = _conv_grad_input(x.data, w.data, out_shape, stride, padding, groups)
    if b is not None:
        out_data = out_data + b.data.reshape(1, -1, 1, 1)
    parents = (x, w) if b is None else (x, w, b)
    out = Tensor(out_data, requires_grad=any(p.requires_grad for p in parents),
                 parents=parents)

    def backward(g):
        x._accumulate(_conv_forward(g, w.data, stride, padding, groups))
        w._accumulate(_conv_grad_weight(g, x.data, w.shape, stride, padding, groups))
        if b is not None:
            b._accumulate(g.sum(axis=(0, 2, 3)).reshape(b.shape))

    out._backward = backward
    return out


def unfold(x: Tensor, k: int, stride: int = 1, padding: int = 0) -> Tensor:
    """Extract k x k patches: (N,C,H,W) -> (N, C*k*k, Ho, Wo)."""
    cols = _im2col(x.data, k, stride, padding)
    n, c = x.shape[:2]
    ho, wo = cols.shape[-2:]
    out = Tensor(cols.reshape(n, c * k * k, ho, wo),
                 requires_grad=x.requires_grad, parents=(x,))
    x_shape = x.shape

    def backward(g):
        g6 = g.reshape(n, c, k, k, ho, wo)
        x._accumulate(_col2im(g6, x_shape, k, stride, padding))

    out._backward = backward
    return out


def pad2d(x: Tensor, top: int, bottom: int, left: int, right: int) -> Tensor:
    """Zero-pad the two trailing spatial dimensions."""
    out_data = np.pad(x.data, ((0, 0), (0, 0), (top, bottom), (left, right)))
    out = Tensor(out_data, requires_grad=x.requires_grad, parents=(x,))
    h, w = x.shape[2], x.shape[3]

    def backward(g):
        x._accumulate(g[:, :, top:top + h, left:left + w])

    out._backward = backward
    return out


# -- activations -----------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    return x._unary(lambda a: np.maximum(a, 0.0),
                    lambda a, o: (a > 0).astype(a.dtype))


def sigmoid(x: Tensor) -> Tensor:
    return x._unary(special.expit, lambda a, o: o * (1.0 - o))


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    # python-float constants so f32 inputs stay f32
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    inv_sqrt2pi = 1.0 / math.sqrt(2.0 * math.pi)

    def fwd(a):
        return a * 0.5 * (1.0 + special.erf(a * inv_sqrt2))

    def dfn(a, o):
        phi = np.exp(-0.5 * a * a) * inv_sqrt2pi
        cdf = 0.5 * (1.0 + special.erf(a * inv_sqrt2))
        return cdf + a * phi

    return x._unary(fwd, dfn)


def hardswish(x: Tensor) -> Tensor:
    """x * clamp(x + 3, 0, 6) / 6."""

    def fwd(a):
        return a * np.clip(a + 3.0, 0.0, 6.0) / 6.0

    def dfn(a, o):
        d = np.where(a <= -3.0, 0.0, np.where(a >= 3.0, 1.0, (2.0 * a + 3.0) / 6.0))
        return d.astype(a.dtype)

    return x._unary(fwd, dfn)


_ACTIVATIONS = {"relu": relu, "gelu": gelu, "hardswish": hardswish, "sigmoid": sigmoid}


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        return _ACTIVATIONS[kind](x)
    except KeyError:
        raise ConfigError(f"unknown activation kind {kind!r}") from None


# -- pooling -----------------------------------------------------------------------

def gap_spatial(x: Tensor) -> Tensor:
    """N x C x H x W -> N x C x 1 x 1 mean over the spatial dims."""
    return x.mean(axis=(2, 3), keepdims=True)


def gap_channel(x: Tensor) -> Tensor:
    """N x C x H x W -> N x 1 x H x W mean over channels."""
    return x.mean(axis=1, keepdims=True)


def gmp_channel(x: Tensor) -> Tensor:
    """N x C x H x W -> N x 1 x H x W max over channels."""
    return x.amax(axis=1, keepdims=True)


_POOLS = {"gap_spatial": gap_spatial, "gap_channel": gap_channel, "gmp_channel": gmp_channel}


def pool(x: Tensor, kind: str) -> Tensor:
    if x.ndim != 4 or 0 in x.shape:
        raise DimensionError("pool expects a non-empty 4-D tensor")
    try:
        return _POOLS[kind](x)
    except KeyError:
        raise ConfigError(f"unknown pool kind {kind!r}") from None


# -- normalization ------------------------------------------------------------------

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the channel dimension at every spatial position."""
    mu = x.mean(axis=1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    normed = centered / (var + eps).sqrt()
    return normed * gamma + beta


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis`."""
    shift = x - np.max(x.data, axis=axis, keepdims=True)
    e = shift.exp()
    return e / e.sum(axis=axis, keepdims=True)


# -- resampling & permutation -----------------------------------------------------------

def _interp_matrix(in_size: int, out_size: int, dtype) -> np.ndarray:
    """Dense align-corners-false bilinear interpolation matrix (out x in)."""
    m = np.zeros((out_size, in_size), dtype=dtype)
    if in_size == 1:
        m[:, 0] = 1.0
        return m
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1.0)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    m[np.arange(out_size), lo] += 1.0 - frac
    m[np.arange(out_size), hi] += frac
    return m


def bilinear_rescale(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resampling (align_corners=False) of the spatial dims."""
    if out_h < 1 or out_w < 1:
        raise ConfigError("output size must be >= 1")
    h, w = x.shape[2], x.shape[3]
    if (out_h, out_w) == (h, w):
        return x
    mh = _interp_matrix(h, out_h, x.data.dtype)
    mw = _interp_matrix(w, out_w, x.data.dtype)
    out_data = np.einsum("oh,nchw,pw->ncop", mh, x.data, mw, optimize=True)
    out = Tensor(out_data, requires_grad=x.requires_grad, parents=(x,))

    def backward(g):
        x._accumulate(np.einsum("oh,ncop,pw->nchw", mh, g, mw, optimize=True))

    out._backward = backward
    return out


def shuffle_permutation(channels: int, groups: int) -> np.ndarray:
    """Destination ordering of the channel shuffle: c -> (c % g)*(C/g) + c//g."""
    c = np.arange(channels)
    return (c % groups) * (channels // groups) + c // groups


def channel_shuffle(x: Tensor, groups: int) -> Tensor:
    """Interleave channel groups; a pure (exactly invertible) permutation."""
    c = x.shape[1]
    if c % groups:
        raise ConfigError(f"groups={groups} does not divide channels {c}")
    if groups == 1:
        return x
    perm = shuffle_permutation(c, groups)
    # out[:, perm[c]] = x[:, c]  <=>  out = x[:, argsort(perm)]
    gather = np.argsort(perm)
    out = Tensor(x.data[:, gather], requires_grad=x.requires_grad, parents=(x,))

    def backward(g):
        x._accumulate(g[:, perm])

    out._backward = backward
    return out
