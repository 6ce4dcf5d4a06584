"""Differentiable primitives.

Image tensors are ``[N, C, H, W]``; functions that take images also accept a
single ``[C, H, W]`` image and return the same rank. Each op returns a new
:class:`Tensor` whose backward closure maps the output gradient to one
gradient per parent (``None`` for non-differentiable inputs).
"""

from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor

_mac_counter = {"active": False, "count": 0}


@contextlib.contextmanager
def count_macs():
    """Tally multiply-accumulates of conv2d and matmul inside the block.

    Yields a dict whose ``"count"`` entry holds the running total.
    """
    prev = dict(_mac_counter)
    _mac_counter.update(active=True, count=0)
    tally = {"count": 0}
    try:
        yield tally
    finally:
        tally["count"] = _mac_counter["count"]
        _mac_counter.update(prev)


def _tally(n):
    if _mac_counter["active"]:
        _mac_counter["count"] += int(n)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# elementwise arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return Tensor._from_op(out, (a, b), backward, "div")


def scale(x, c):
    x = as_tensor(x)
    c = float(c)
    return Tensor._from_op(x.data * c, (x,), lambda g: (g * c,), "scale")


def relu(x):
    x = as_tensor(x)
    keep = x.data > 0
    return Tensor._from_op(np.where(keep, x.data, 0.0), (x,), lambda g: (g * keep,), "relu")


def sigmoid(x):
    x = as_tensor(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))  # overflow-free logistic
    return Tensor._from_op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def abs(x):
    x = as_tensor(x)
    sign = np.sign(x.data)
    return Tensor._from_op(np.abs(x.data), (x,), lambda g: (g * sign,), "abs")


def square(x):
    x = as_tensor(x)
    return Tensor._from_op(x.data ** 2, (x,), lambda g: (2.0 * g * x.data,), "square")


# reductions and shape


def sum(x, axis=None, keepdims=False):
    x = as_tensor(x)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._from_op(x.data.sum(axis=axis, keepdims=keepdims), (x,), backward, "sum")


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum(x, axis, keepdims), 1.0 / count)


def reshape(x, shape):
    x = as_tensor(x)
    src = x.shape
    return Tensor._from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),), "reshape")


def transpose(x, axes=None):
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if not axes else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return Tensor._from_op(
        x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),), "transpose"
    )


def concat(parts, axis):
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ValueError("concat needs at least one tensor")
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._from_op(
        np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward, "concat"
    )


def matmul(a, b):
    """Matrix product over the last two axes, batched over leading ones."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs operands with at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)
    _tally(out.size * a.shape[-1])

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._from_op(out, (a, b), backward, "matmul")


# normalisations


def softmax(x, axis=-1):
    """Softmax with max subtraction; rows along ``axis`` sum to one."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(out, (x,), backward, "softmax")


def softmax_last_axis(x):
    return softmax(x, axis=-1)


def l2_normalize(x, axis=-1, eps=1e-12):
    """``x / max(||x||, eps)`` along ``axis``."""
    x = as_tensor(x)
    norm = np.sqrt((x.data ** 2).sum(axis=axis, keepdims=True))
    denom = np.maximum(norm, eps)
    out = x.data / denom
    live = norm > eps

    def backward(g):
        radial = (g * out).sum(axis=axis, keepdims=True)
        return ((g - np.where(live, out * radial, 0.0)) / denom,)

    return Tensor._from_op(out, (x,), backward, "l2_normalize")


def standardize(x, axis, eps=1e-5):
    """Zero-mean, unit-variance along ``axis`` (no affine part)."""
    x = as_tensor(x)
    mu = x.data.mean(axis=axis, keepdims=True)
    centred = x.data - mu
    inv = 1.0 / np.sqrt((centred ** 2).mean(axis=axis, keepdims=True) + eps)
    out = centred * inv

    def backward(g):
        gm = g.mean(axis=axis, keepdims=True)
        gy = (g * out).mean(axis=axis, keepdims=True)
        return (inv * (g - gm - out * gy),)

    return Tensor._from_op(out, (x,), backward, "standardize")


def layer_norm_channels(x, weight, bias, eps=1e-5):
    """Normalise every pixel's channel vector, then apply per-channel affine."""
    axis = x.ndim - 3
    shape = (-1, 1, 1)
    y = standardize(x, axis, eps)
    return add(mul(y, reshape(weight, shape)), reshape(bias, shape))


# image ops


def _batched(fn):
    """Lift a 4-D image op so it also accepts one 3-D image."""

    def wrapper(x, *args, **kwargs):
        x = as_tensor(x)
        if x.ndim == 3:
            out = fn(reshape(x, (1,) + x.shape), *args, **kwargs)
            return reshape(out, out.shape[1:])
        if x.ndim != 4:
            raise ValueError(f"expected a [C,H,W] or [N,C,H,W] tensor, got shape {x.shape}")
        return fn(x, *args, **kwargs)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _pad_amount(padding, k):
    if padding == "same":
        return k // 2
    if padding == "valid":
        return 0
    if isinstance(padding, (int, np.integer)) and padding >= 0:
        return int(padding)
    raise ValueError(f"padding must be 'same', 'valid' or a nonnegative int, got {padding!r}")


def _pad(a, p):
    if p == 0:
        return a
    return np.pad(a, ((0, 0), (0, 0), (p, p), (p, p)))


def _correlate(x, w, p):
    """Dense cross-correlation, ``x`` [N,Cin,H,W], ``w`` [Cout,Cin,k,k].

    Two equivalent evaluation orders; the cheaper one depends on which side
    has more channels.
    """
    n, c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    xp = _pad(x, p)
    if k == 1:
        return np.tensordot(w[:, :, 0, 0], xp, axes=([1], [1])).transpose(1, 0, 2, 3)
    ho, wo = h + 2 * p - k + 1, wd + 2 * p - k + 1
    if c_out < c_in:
        # one GEMM for all k*k taps on the padded input, then shifted sums
        taps = np.tensordot(w.transpose(2, 3, 0, 1).reshape(k * k * c_out, c_in), xp, axes=([1], [1]))
        taps = taps.reshape(k, k, c_out, n, h + 2 * p, wd + 2 * p)
        out = np.zeros((c_out, n, ho, wo))
        for i in range(k):
            for j in range(k):
                out += taps[i, j, :, :, i:i + ho, j:j + wo]
        return out.transpose(1, 0, 2, 3)
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))  # N,Cin,H',W',k,k
    out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3]))  # N,H',W',Cout
    return out.transpose(0, 3, 1, 2)


def _weight_grad(g, x, p, k):
    """Gradient of a dense correlation w.r.t. its kernel."""
    xp = _pad(x, p).transpose(1, 0, 2, 3)  # Cin,N,Hp,Wp
    c_in = xp.shape[0]
    c_out, ho, wo = g.shape[1], g.shape[2], g.shape[3]
    gm = g.transpose(1, 0, 2, 3).reshape(c_out, -1)
    out = np.empty((c_out, c_in, k, k))
    for i in range(k):
        for j in range(k):
            out[:, :, i, j] = gm @ xp[:, :, i:i + ho, j:j + wo].reshape(c_in, -1).T
    return out


def _depthwise(x, w, p):
    k = w.shape[-1]
    n, c, h, wd = x.shape
    xp = _pad(x, p)
    ho, wo = h + 2 * p - k + 1, wd + 2 * p - k + 1
    out = np.zeros((n, c, ho, wo))
    tap = np.empty_like(out)
    for i in range(k):
        for j in range(k):
            np.multiply(xp[:, :, i:i + ho, j:j + wo], w[None, :, 0, i, j, None, None], out=tap)
            out += tap
    return out


def _depthwise_weight_grad(g, x, p, k):
    xp = _pad(x, p)
    ho, wo = g.shape[2], g.shape[3]
    out = np.empty((g.shape[1], 1, k, k))
    for i in range(k):
        for j in range(k):
            out[:, 0, i, j] = np.einsum("nchw,nchw->c", g, xp[:, :, i:i + ho, j:j + wo])
    return out


@_batched
def conv2d(x, w, b=None, padding="same", groups=1):
    """2-D cross-correlation with stride 1 and zero padding, plus bias.

    ``groups`` may be 1 (dense) or the channel count (depthwise, weight
    ``[C, 1, k, k]``).
    """
    w = as_tensor(w)
    n, c_in, h, wd = x.shape
    c_out, c_per_group, kh, kw = w.shape
    if kh != kw or kh % 2 == 0:
        raise ValueError(f"kernel must be square with odd size, got {kh}x{kw}")
    if groups not in (1, c_in):
        raise ValueError("groups must be 1 or equal to the input channel count")
    if c_per_group * groups != c_in:
        raise ValueError(
            f"channel mismatch: input has {c_in} channels, kernel expects {c_per_group * groups}"
        )
    if groups > 1 and c_out != c_in:
        raise ValueError("depthwise conv needs as many output as input channels")
    k = kh
    p = _pad_amount(padding, k)
    if h + 2 * p < k or wd + 2 * p < k:
        raise ValueError("kernel larger than padded input")
    depthwise = groups > 1
    out = _depthwise(x.data, w.data, p) if depthwise else _correlate(x.data, w.data, p)
    _tally(out.size * c_per_group * k * k)
    parents = (x, w)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (c_out,):
            raise ValueError(f"bias shape {b.shape} does not match {c_out} output channels")
        out = out + b.data[None, :, None, None]
        parents = (x, w, b)
    q = k - 1 - p

    def backward(g):
        flipped = w.data[:, :, ::-1, ::-1]
        if depthwise:
            gx = _depthwise(g, flipped, q) if x.requires_grad else None
            gw = _depthwise_weight_grad(g, x.data, p, k)
        else:
            gx = _correlate(g, flipped.transpose(1, 0, 2, 3), q) if x.requires_grad else None
            gw = _weight_grad(g, x.data, p, k)
        grads = (gx, gw)
        if b is not None:
            grads += (g.sum(axis=(0, 2, 3)),)
        return grads

    return Tensor._from_op(out, parents, backward, "conv2d")


def concat_channels(parts):
    """Stack image tensors along the channel axis, in argument order."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ValueError("concat_channels needs at least one tensor")
    axis = parts[0].ndim - 3
    spatial = {p.shape[:axis] + p.shape[axis + 1:] for p in parts}
    if len(spatial) != 1:
        raise ValueError(f"spatial/batch shapes differ: {[p.shape for p in parts]}")
    if len(parts) == 1:
        return parts[0]
    return concat(parts, axis)


@_batched
def pixel_unshuffle(x, r):
    """Space-to-depth: ``[N,C,H,W] -> [N,C*r*r,H/r,W/r]``.

    Output channel ``c*r*r + i*r + j`` holds input pixels ``(i::r, j::r)`` of
    channel ``c``.
    """
    n, c, h, w = x.shape
    if r < 1 or h % r or w % r:
        raise ValueError(f"spatial size {h}x{w} not divisible by factor {r}")
    if r == 1:
        return x
    y = reshape(x, (n, c, h // r, r, w // r, r))
    y = transpose(y, (0, 1, 3, 5, 2, 4))
    return reshape(y, (n, c * r * r, h // r, w // r))


@_batched
def pixel_shuffle(x, r):
    """Depth-to-space; exact inverse of :func:`pixel_unshuffle`."""
    n, c, h, w = x.shape
    if r < 1 or c % (r * r):
        raise ValueError(f"channel count {c} not divisible by {r * r}")
    if r == 1:
        return x
    co = c // (r * r)
    y = reshape(x, (n, co, r, r, h, w))
    y = transpose(y, (0, 1, 4, 2, 5, 3))
    return reshape(y, (n, co, h * r, w * r))


def global_avg_pool(x):
    """Spatial mean keeping singleton H and W axes."""
    x = as_tensor(x)
    return mean(x, axis=(x.ndim - 2, x.ndim - 1), keepdims=True)


def maximum(x, floor):
    """Elementwise ``max(x, floor)`` for a constant ``floor``."""
    x = as_tensor(x)
    keep = x.data >= floor
    return Tensor._from_op(np.maximum(x.data, floor), (x,), lambda g: (g * keep,), "maximum")

