"""Differentiable 1D tensor primitives.

Tensors are numpy arrays shaped ``(L, C)`` (residues by channels), optionally
with leading batch axes ``(..., L, C)``. Every forward op has a matching
``*_backward`` that maps the output cotangent onto its inputs; the model module
composes them by hand.
"""

import numpy as np

from .errors import ShapeError, ValidationError


def _check_rank(x, name):
    if x.ndim < 2:
        raise ShapeError(f"{name} must have at least 2 axes (length, channels); got shape {x.shape}")


def conv1d(x, w, b=None):
    """Same-padded 1D convolution (cross-correlation) with zero padding.

    ``x`` is ``(..., L, Cin)``, ``w`` is ``(K, Cin, Cout)`` with odd ``K`` and
    ``b`` is ``(Cout,)`` or None. Returns ``(..., L, Cout)``.
    """
    x = np.asarray(x)
    w = np.asarray(w)
    _check_rank(x, "x")
    if w.ndim != 3:
        raise ShapeError(f"kernel must be (K, Cin, Cout); got shape {w.shape}")
    k, cin, cout = w.shape
    if k % 2 == 0:
        raise ShapeError(f"kernel axis K must be odd; got K={k}")
    if x.shape[-1] != cin:
        raise ShapeError(f"channel axis mismatch: input has {x.shape[-1]} channels, kernel expects Cin={cin}")
    if b is not None and np.shape(b) != (cout,):
        raise ShapeError(f"bias axis mismatch: expected ({cout},), got {np.shape(b)}")
    length = x.shape[-2]
    half = (k - 1) // 2
    xp = _pad_length(x, half)
    y = xp[..., 0:length, :] @ w[0]
    for j in range(1, k):
        y = y + xp[..., j:j + length, :] @ w[j]
    if b is not None:
        y = y + b
    return y


def conv1d_backward(dy, x, w, with_bias=True):
    """Return ``(dx, dw, db)`` for :func:`conv1d`; ``db`` is None without bias."""
    k = w.shape[0]
    half = (k - 1) // 2
    length = x.shape[-2]
    xp = _pad_length(x, half)
    dxp = np.zeros_like(xp)
    dw = np.empty_like(w)
    lead = x.shape[:-2]
    dy2 = dy.reshape(-1, length, dy.shape[-1])
    xp2 = xp.reshape(-1, xp.shape[-2], xp.shape[-1])
    for j in range(k):
        win = xp2[:, j:j + length, :]
        dw[j] = np.einsum("blc,blo->co", win, dy2)
        dxp[..., j:j + length, :] += dy @ w[j].T
    dx = dxp[..., half:half + length, :] if half else dxp
    db = dy.reshape(-1, dy.shape[-1]).sum(axis=0) if with_bias else None
    assert dx.shape == lead + x.shape[-2:]
    return dx, dw, db


def _pad_length(x, half):
    if half == 0:
        return x
    pad = [(0, 0)] * x.ndim
    pad[-2] = (half, half)
    return np.pad(x, pad)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(dy, x):
    # subgradient at exactly 0 is 0
    return dy * (x > 0)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(dy, y):
    """Gradient of the logistic given its output ``y``."""
    return dy * y * (1.0 - y)


def softmax_channels(x):
    """Softmax over the last (channel) axis, independently per residue."""
    z = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_channels_backward(dy, y):
    return y * (dy - np.sum(dy * y, axis=-1, keepdims=True))


def maxpool1d(x):
    """Max over non-overlapping residue pairs. Returns ``(y, argmax)``.

    ``argmax`` holds 0/1 per output entry (ties resolve to the earlier residue)
    and is what :func:`maxpool1d_backward` needs.
    """
    x = np.asarray(x)
    _check_rank(x, "x")
    length = x.shape[-2]
    if length % 2:
        raise ShapeError(f"length axis must be even for pooling; got L={length}")
    pairs = x.reshape(x.shape[:-2] + (length // 2, 2, x.shape[-1]))
    arg = np.argmax(pairs, axis=-2)
    y = np.take_along_axis(pairs, arg[..., None, :], axis=-2)[..., 0, :]
    return y, arg


def maxpool1d_backward(dy, arg):
    shape = dy.shape[:-2] + (dy.shape[-2], 2, dy.shape[-1])
    dpairs = np.zeros(shape, dtype=dy.dtype)
    np.put_along_axis(dpairs, arg[..., None, :], dy[..., None, :], axis=-2)
    return dpairs.reshape(dy.shape[:-2] + (2 * dy.shape[-2], dy.shape[-1]))


def _upsample_index(length):
    coord = np.minimum(np.arange(2 * length) / 2.0, length - 1)
    lo = np.floor(coord).astype(np.intp)
    hi = np.minimum(lo + 1, length - 1)
    frac = coord - lo
    return lo, hi, frac


def upsample_linear1d(x):
    """Double the length by linear interpolation.

    Output residue ``j`` samples the input at coordinate ``min(j / 2, L - 1)``,
    so the last output replicates the last input.
    """
    x = np.asarray(x)
    _check_rank(x, "x")
    lo, hi, frac = _upsample_index(x.shape[-2])
    f = frac[:, None]
    return (1.0 - f) * x[..., lo, :] + f * x[..., hi, :]


def upsample_linear1d_backward(dy):
    length = dy.shape[-2] // 2
    lo, hi, frac = _upsample_index(length)
    f = frac[:, None]
    dx = np.zeros(dy.shape[:-2] + (length, dy.shape[-1]), dtype=dy.dtype)
    index = (slice(None),) * (dy.ndim - 2)
    np.add.at(dx, index + (lo,), (1.0 - f) * dy)
    np.add.at(dx, index + (hi,), f * dy)
    return dx


def dropout(x, rate, rng=None, training=False):
    """Inverted dropout. Returns ``(y, scale)``; backward is ``dy * scale``.

    In inference mode (or with ``rate == 0``) the input is returned untouched
    and ``scale`` is None.
    """
    if not 0.0 <= rate < 1.0:
        raise ValidationError(f"dropout rate must lie in [0, 1); got {rate}")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ValidationError("training-mode dropout needs an explicit rng")
    keep = rng.random(x.shape) >= rate
    scale = keep / (1.0 - rate)
    return x * scale, scale


def dropout_backward(dy, scale):
    return dy if scale is None else dy * scale


def concat_channels(a, b):
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(f"length axis mismatch in concat: {a.shape[:-1]} vs {b.shape[:-1]}")
    return np.concatenate([a, b], axis=-1)


def split_channels(y, ca):
    """Inverse of :func:`concat_channels`; also its backward."""
    return y[..., :ca], y[..., ca:]
