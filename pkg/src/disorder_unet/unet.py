"""1D Attention U-Net for per-residue disorder prediction.

Layout for ``n = len(filters_per_level)`` levels:

* contracting path: per level two ``conv(K)+relu``, dropout, then max-pool
  (except at the deepest level);
* expanding path: per level ``l = n-2 .. 0`` an additive attention gate scales
  the level-``l`` skip features using the coarser decoder output as gating
  signal; the coarser output is upsampled, passed through ``conv(up_kernel)+relu``,
  concatenated with the gated skip and fed to two ``conv(K)+relu`` and dropout;
* head: ``1x1`` conv to ``num_classes`` channels and a channel softmax.

Parameters live in a plain ``dict`` mapping names to float64 arrays.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor_ops as ops
from .errors import ShapeError, SequenceTooLongError, ValidationError

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 1024
    filters_per_level: tuple = (32, 64, 64, 64)
    kernel_len: int = 7
    dropout_rate: float = 0.25
    use_onehot_input: bool = False
    num_classes: int = 2
    max_len: int = 7168
    up_kernel: int = 2
    gate_reduction: int = 1

    def __post_init__(self):
        object.__setattr__(self, "filters_per_level", tuple(int(f) for f in self.filters_per_level))
        self.validate()

    @property
    def levels(self):
        return len(self.filters_per_level)

    @property
    def in_channels(self):
        return self.input_dim + (len(AMINO_ACIDS) if self.use_onehot_input else 0)

    @property
    def length_multiple(self):
        return 2 ** (self.levels - 1)

    def gate_channels(self, level):
        return max(1, self.filters_per_level[level] // self.gate_reduction)

    def validate(self):
        if self.levels < 1:
            raise ValidationError("filters_per_level must be non-empty")
        if any(f < 1 for f in self.filters_per_level):
            raise ValidationError("filter counts must be positive")
        if self.input_dim < 1:
            raise ValidationError("input_dim must be positive")
        if self.kernel_len < 1 or self.kernel_len % 2 == 0:
            raise ValidationError(f"kernel_len must be odd; got {self.kernel_len}")
        if self.up_kernel < 1:
            raise ValidationError("up_kernel must be positive")
        if self.gate_reduction < 1:
            raise ValidationError("gate_reduction must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError(f"dropout_rate must lie in [0, 1); got {self.dropout_rate}")
        if self.num_classes != 2:
            raise ValidationError("only binary (2-class) heads are supported")
        if self.max_len < 1 or self.max_len % self.length_multiple:
            raise ValidationError(
                f"max_len={self.max_len} is not divisible by 2**(levels-1)={self.length_multiple}"
            )

    def to_dict(self):
        d = asdict(self)
        d["filters_per_level"] = list(self.filters_per_level)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown ModelConfig fields: {sorted(unknown)}")
        return cls(**d)


def param_shapes(config):
    """Ordered ``{name: shape}`` of every trainable tensor."""
    k = config.kernel_len
    f = config.filters_per_level
    shapes = {}

    def conv(name, kk, cin, cout, bias=True):
        shapes[f"{name}.w"] = (kk, cin, cout)
        if bias:
            shapes[f"{name}.b"] = (cout,)

    cin = config.in_channels
    for level, width in enumerate(f):
        conv(f"down{level}.conv1", k, cin, width)
        conv(f"down{level}.conv2", k, width, width)
        cin = width
    g = f[-1]
    for level in range(config.levels - 2, -1, -1):
        width = f[level]
        inter = config.gate_channels(level)
        shapes[f"gate{level}.W_x"] = (1, width, inter)
        shapes[f"gate{level}.W_g"] = (1, g, inter)
        shapes[f"gate{level}.b_g"] = (inter,)
        shapes[f"gate{level}.psi"] = (1, inter, 1)
        shapes[f"gate{level}.b_psi"] = (1,)
        conv(f"up{level}.upconv", config.up_kernel, g, width)
        conv(f"up{level}.conv1", k, 2 * width, width)
        conv(f"up{level}.conv2", k, width, width)
        g = width
    conv("head", 1, f[0], config.num_classes)
    return shapes


def param_count(config):
    """Exact number of trainable scalars; a pure function of the config."""
    return int(sum(int(np.prod(s)) for s in param_shapes(config).values()))


def init_model(config, seed=0):
    """Fan-in scaled uniform kernels (He-uniform) and zero biases."""
    if not isinstance(config, ModelConfig):
        raise ValidationError("init_model expects a ModelConfig")
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if len(shape) == 3:
            fan_in = shape[0] * shape[1]
            limit = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            params[name] = np.zeros(shape)
    return params


# -- convolution helpers: even up-kernels use an asymmetric "same" padding --


def _conv(x, w, b=None):
    k = w.shape[0]
    if k % 2:
        return ops.conv1d(x, w, b)
    # even kernel: same-padding puts the extra zero on the right, i.e. a leading zero tap
    w_odd = np.concatenate([np.zeros((1,) + w.shape[1:]), w], axis=0)
    return ops.conv1d(x, w_odd, b)


def _conv_backward(dy, x, w, with_bias=True):
    k = w.shape[0]
    if k % 2:
        return ops.conv1d_backward(dy, x, w, with_bias)
    w_odd = np.concatenate([np.zeros((1,) + w.shape[1:]), w], axis=0)
    dx, dw, db = ops.conv1d_backward(dy, x, w_odd, with_bias)
    return dx, dw[1:], db


# -- attention gate --


def gate_params(params, level):
    p = f"gate{level}."
    return {k: params[p + k] for k in ("W_x", "W_g", "b_g", "psi", "b_psi")}


def attention_gate(x_skip, g, gp, return_cache=False):
    """Additive attention gate.

    ``x_skip`` is ``(..., L, C)`` and the gating signal ``g`` is
    ``(..., L/2, Cg)``. Computes a single coefficient ``alpha`` per residue,
    broadcast over channels, and returns ``alpha * x_skip``.
    """
    if g.shape[-2] * 2 != x_skip.shape[-2]:
        raise ShapeError(
            f"length axis mismatch: gating signal of length {g.shape[-2]} upsamples to "
            f"{2 * g.shape[-2]}, skip has {x_skip.shape[-2]}"
        )
    theta = ops.conv1d(x_skip, gp["W_x"])
    phi = ops.conv1d(g, gp["W_g"], gp["b_g"])
    pre = theta + ops.upsample_linear1d(phi)
    q = ops.relu(pre)
    alpha = ops.sigmoid(ops.conv1d(q, gp["psi"], gp["b_psi"]))
    out = alpha * x_skip
    if return_cache:
        return out, (x_skip, g, pre, q, alpha)
    return out


def attention_gate_backward(dout, gp, cache):
    """Return ``(dx_skip, dg, grads)`` where grads keys match :func:`gate_params`."""
    x_skip, g, pre, q, alpha = cache
    dx = dout * alpha
    dalpha = np.sum(dout * x_skip, axis=-1, keepdims=True)
    dlogit = ops.sigmoid_backward(dalpha, alpha)
    dq, dpsi, db_psi = ops.conv1d_backward(dlogit, q, gp["psi"])
    dpre = ops.relu_backward(dq, pre)
    dx_theta, dW_x, _ = ops.conv1d_backward(dpre, x_skip, gp["W_x"], with_bias=False)
    dphi = ops.upsample_linear1d_backward(dpre)
    dg, dW_g, db_g = ops.conv1d_backward(dphi, g, gp["W_g"])
    grads = {"W_x": dW_x, "W_g": dW_g, "b_g": db_g, "psi": dpsi, "b_psi": db_psi}
    return dx + dx_theta, dg, grads


# -- full network --


def onehot_encode(sequence):
    """``(L, 20)`` one-hot; non-standard residues map to the zero vector."""
    out = np.zeros((len(sequence), len(AMINO_ACIDS)))
    index = {a: i for i, a in enumerate(AMINO_ACIDS)}
    for i, aa in enumerate(sequence.upper()):
        j = index.get(aa)
        if j is not None:
            out[i, j] = 1.0
    return out


def padded_length(length, config):
    m = config.length_multiple
    return -(-length // m) * m


def forward_batch(params, config, x, training=False, rng=None):
    """Forward pass on a padded batch ``(B, Lp, in_channels)``.

    ``Lp`` must be a multiple of ``2**(levels-1)``. Returns ``(probs, cache)``
    with ``probs`` shaped ``(B, Lp, num_classes)``.
    """
    n = config.levels
    if x.shape[-1] != config.in_channels:
        raise ShapeError(f"channel axis mismatch: got {x.shape[-1]} features, model expects {config.in_channels}")
    if x.shape[-2] % config.length_multiple:
        raise ShapeError(f"length axis {x.shape[-2]} is not a multiple of {config.length_multiple}")
    rate = config.dropout_rate
    cache = {"down": [], "up": [], "pool": []}
    skips = []
    h = x
    for level in range(n):
        a_in = h
        z1 = ops.conv1d(a_in, params[f"down{level}.conv1.w"], params[f"down{level}.conv1.b"])
        a1 = ops.relu(z1)
        z2 = ops.conv1d(a1, params[f"down{level}.conv2.w"], params[f"down{level}.conv2.b"])
        a2 = ops.relu(z2)
        d, scale = ops.dropout(a2, rate, rng, training)
        cache["down"].append((a_in, z1, a1, z2, scale))
        skips.append(d)
        if level < n - 1:
            h, arg = ops.maxpool1d(d)
            cache["pool"].append(arg)
    g = skips[-1]
    for level in range(n - 2, -1, -1):
        gated, gcache = attention_gate(skips[level], g, gate_params(params, level), return_cache=True)
        ug = ops.upsample_linear1d(g)
        zu = _conv(ug, params[f"up{level}.upconv.w"], params[f"up{level}.upconv.b"])
        au = ops.relu(zu)
        cat = ops.concat_channels(au, gated)
        z1 = ops.conv1d(cat, params[f"up{level}.conv1.w"], params[f"up{level}.conv1.b"])
        a1 = ops.relu(z1)
        z2 = ops.conv1d(a1, params[f"up{level}.conv2.w"], params[f"up{level}.conv2.b"])
        a2 = ops.relu(z2)
        d, scale = ops.dropout(a2, rate, rng, training)
        cache["up"].append((level, g, gcache, ug, zu, cat, z1, a1, z2, scale))
        g = d
    logits = ops.conv1d(g, params["head.w"], params["head.b"])
    probs = ops.softmax_channels(logits)
    cache["head"] = (g, probs)
    return probs, cache


def backward_batch(params, config, cache, dprobs):
    """Gradients of a scalar loss wrt every parameter, given ``dL/dprobs``."""
    grads = {}
    g, probs = cache["head"]
    dlogits = ops.softmax_channels_backward(dprobs, probs)
    dg, grads["head.w"], grads["head.b"] = ops.conv1d_backward(dlogits, g, params["head.w"])
    n = config.levels
    dskips = [None] * n
    for level, g_in, gcache, ug, zu, cat, z1, a1, z2, scale in reversed(cache["up"]):
        p = f"up{level}."
        da2 = ops.dropout_backward(dg, scale)
        dz2 = ops.relu_backward(da2, z2)
        da1, grads[p + "conv2.w"], grads[p + "conv2.b"] = ops.conv1d_backward(dz2, a1, params[p + "conv2.w"])
        dz1 = ops.relu_backward(da1, z1)
        dcat, grads[p + "conv1.w"], grads[p + "conv1.b"] = ops.conv1d_backward(dz1, cat, params[p + "conv1.w"])
        dau, dgated = ops.split_channels(dcat, config.filters_per_level[level])
        dzu = ops.relu_backward(dau, zu)
        dug, grads[p + "upconv.w"], grads[p + "upconv.b"] = _conv_backward(dzu, ug, params[p + "upconv.w"])
        dg_in = ops.upsample_linear1d_backward(dug)
        dskip, dg_gate, ggrads = attention_gate_backward(dgated, gate_params(params, level), gcache)
        for k, v in ggrads.items():
            grads[f"gate{level}.{k}"] = v
        dskips[level] = dskip
        dg = dg_in + dg_gate
    dskips[n - 1] = dg
    dh = None
    for level in range(n - 1, -1, -1):
        a_in, z1, a1, z2, scale = cache["down"][level]
        p = f"down{level}."
        dd = dskips[level]
        if dh is not None:
            dd = dd + ops.maxpool1d_backward(dh, cache["pool"][level])
        da2 = ops.dropout_backward(dd, scale)
        dz2 = ops.relu_backward(da2, z2)
        da1, grads[p + "conv2.w"], grads[p + "conv2.b"] = ops.conv1d_backward(dz2, a1, params[p + "conv2.w"])
        dz1 = ops.relu_backward(da1, z1)
        dh, grads[p + "conv1.w"], grads[p + "conv1.b"] = ops.conv1d_backward(dz1, a_in, params[p + "conv1.w"])
    return {name: grads[name] for name in params}


def build_input(config, emb, onehot=None, sequence=None):
    """Validate one embedding (and optional one-hot) and return model input ``(L, C)``."""
    emb = np.asarray(emb, dtype=float)
    if emb.ndim != 2:
        raise ShapeError(f"embedding must be (L, D); got shape {emb.shape}")
    length = emb.shape[0]
    if length > config.max_len:
        raise SequenceTooLongError(f"sequence length {length} exceeds the {config.max_len} residue limit")
    if length == 0:
        raise ShapeError("embedding has zero residues")
    if emb.shape[1] != config.input_dim:
        raise ShapeError(f"channel axis mismatch: embedding has D={emb.shape[1]}, model expects {config.input_dim}")
    if config.use_onehot_input:
        if onehot is None and sequence is not None:
            onehot = onehot_encode(sequence)
        if onehot is None:
            raise ValidationError("model uses one-hot input but none was given")
        onehot = np.asarray(onehot, dtype=float)
        if onehot.shape != (length, len(AMINO_ACIDS)):
            raise ShapeError(f"one-hot must be ({length}, {len(AMINO_ACIDS)}); got {onehot.shape}")
        return np.concatenate([emb, onehot], axis=1)
    return emb


def forward(params, config, emb, onehot=None, mask=None, mode="infer", rng=None, sequence=None):
    """Per-residue class probabilities ``(L, 2)`` for one sequence.

    Column 1 is the disorder probability. ``mask`` (optional boolean ``(L,)``)
    must be a prefix of real residues; anything after it is dropped before the
    sequence is zero-padded to the pooling multiple.
    """
    if mode not in ("infer", "train"):
        raise ValidationError(f"mode must be 'infer' or 'train'; got {mode!r}")
    x = build_input(config, emb, onehot, sequence)
    length = x.shape[0]
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (length,):
            raise ShapeError(f"mask must be ({length},); got {mask.shape}")
        real = int(mask.sum())
        if not mask[:real].all():
            raise ValidationError("mask must mark a prefix of real residues")
        length = real
        x = x[:length]
    lp = padded_length(length, config)
    xb = np.zeros((1, lp, x.shape[1]))
    xb[0, :length] = x
    probs, _ = forward_batch(params, config, xb, training=(mode == "train"), rng=rng)
    return probs[0, :length]
