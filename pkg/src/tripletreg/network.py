"""Two-head convolutional network in numpy.

A stack of conv + ReLU blocks produces the feature map ``h``. The
classification head averages ``h`` spatially into ``x`` and applies
``W_logits``; the embedding head applies ``W_emb`` to the flattened,
un-pooled ``h`` and normalizes the result to unit length.

Tensors are NHWC. Convolutions are implemented with an im2col gather.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidConfig, ShapeError, TraceMismatch
from .geometry import NORM_EPS, l2_normalize
from .tensor import as_dense, make_rng

CHECKPOINT_MAGIC = "tripletreg-checkpoint v1"


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    kernel: int = 3
    stride: int = 2
    padding: int = 1
    relu: bool = True


@dataclass
class NetConfig:
    input_shape: tuple = (16, 16, 1)
    n_classes: int = 10
    d_emb: int = 256
    convs: tuple = (ConvSpec(8), ConvSpec(8))

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.convs = tuple(c if isinstance(c, ConvSpec) else ConvSpec(**c) for c in self.convs)

    def validate(self):
        if not self.convs:
            raise InvalidConfig("the trunk needs at least one convolution")
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise InvalidConfig(f"input_shape must be (H, W, C), got {self.input_shape}")
        if self.n_classes < 2 or self.d_emb < 1:
            raise InvalidConfig("need n_classes >= 2 and d_emb >= 1")
        for c in self.convs:
            if c.out_channels < 1 or c.kernel < 1 or c.stride < 1 or c.padding < 0:
                raise InvalidConfig(f"bad convolution {c}")
        self.feature_shape()

    def layer_shapes(self) -> list[tuple]:
        """``(H, W, C)`` entering each conv, followed by the shape of ``h``."""
        h, w, c = self.input_shape
        shapes = [(h, w, c)]
        for conv in self.convs:
            h = (h + 2 * conv.padding - conv.kernel) // conv.stride + 1
            w = (w + 2 * conv.padding - conv.kernel) // conv.stride + 1
            if h < 1 or w < 1:
                raise InvalidConfig(f"input {self.input_shape} too small for the trunk")
            c = conv.out_channels
            shapes.append((h, w, c))
        return shapes

    def feature_shape(self) -> tuple:
        return self.layer_shapes()[-1]

    def param_shapes(self) -> dict:
        shapes = {}
        for i, (conv, (_, _, c_in)) in enumerate(zip(self.convs, self.layer_shapes())):
            shapes[f"conv{i}.w"] = (conv.kernel, conv.kernel, c_in, conv.out_channels)
            shapes[f"conv{i}.b"] = (conv.out_channels,)
        h, w, c = self.feature_shape()
        shapes["W_logits"] = (c, self.n_classes)
        shapes["W_emb"] = (h * w * c, self.d_emb)
        return shapes

    def n_params(self) -> int:
        return int(sum(np.prod(s) for s in self.param_shapes().values()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        return d


def desk_config(input_shape=(16, 16, 1), n_classes=10, d_emb=256, channels=8) -> NetConfig:
    """Two 3x3 stride-2 convolutions: 16x16 input gives a 4x4 feature map."""
    return NetConfig(tuple(input_shape), n_classes, d_emb, (ConvSpec(channels), ConvSpec(channels)))


@dataclass
class TwoHeadNet:
    config: NetConfig
    params: dict
    version: int = 0

    def bump(self):
        """Mark parameters as changed; traces from earlier forwards become stale."""
        self.version += 1

    def copy(self) -> "TwoHeadNet":
        return TwoHeadNet(self.config, {k: v.copy() for k, v in self.params.items()}, self.version)

    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    cols: list
    pre_acts: list
    h: np.ndarray
    x: np.ndarray
    pre_embedding: np.ndarray
    logits: np.ndarray
    embedding: np.ndarray
    collapse_count: int
    net_id: int
    net_version: int
    extra: dict = field(default_factory=dict)

    @property
    def embedding_norms(self) -> np.ndarray:
        return np.linalg.norm(self.pre_embedding, axis=1)


def init_params(config: NetConfig, rng) -> TwoHeadNet:
    """He-uniform weights (limit ``sqrt(6 / fan_in)``), zero biases."""
    config.validate()
    rng = make_rng(rng)
    params = {}
    for name, shape in config.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
            continue
        fan_in = int(np.prod(shape[:-1]))
        limit = np.sqrt(6.0 / fan_in)
        params[name] = rng.uniform(-limit, limit, size=shape)
    return TwoHeadNet(config, params)


def _im2col(x, conv: ConvSpec):
    p = conv.padding
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
    win = sliding_window_view(xp, (conv.kernel, conv.kernel), axis=(1, 2))
    win = win[:, ::conv.stride, ::conv.stride]
    b, ho, wo, c, k, _ = win.shape
    # (B, Ho, Wo, kh, kw, C) to match weights laid out as (kh, kw, C_in, C_out)
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(b * ho * wo, k * k * c)
    return cols, (b, ho, wo)


def _col2im(dcols, in_shape, out_hw, conv: ConvSpec):
    b, h, w, c = in_shape
    ho, wo = out_hw
    k, s, p = conv.kernel, conv.stride, conv.padding
    dcols = dcols.reshape(b, ho, wo, k, k, c)
    dxp = np.zeros((b, h + 2 * p, w + 2 * p, c))
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s, :] += dcols[:, :, :, i, j, :]
    return dxp[:, p:p + h, p:p + w, :] if p else dxp


def _as_batch(net: TwoHeadNet, inputs) -> np.ndarray:
    x = as_dense(inputs, name="inputs")
    shape = net.config.input_shape
    if x.ndim == 3:
        x = x[None]
    elif x.ndim == 2 and shape[:2] == (1, 1):
        x = x[:, None, None, :]
    if x.ndim != 4 or tuple(x.shape[1:]) != shape:
        raise ShapeError(f"expected inputs of shape (B, {', '.join(map(str, shape))}), got {x.shape}")
    return x


def forward(net: TwoHeadNet, inputs, epsilon: float = NORM_EPS) -> ForwardTrace:
    """Run both heads on a batch and keep what :func:`backward` needs."""
    inputs = _as_batch(net, inputs)
    a = inputs
    cols_list, pre_list = [], []
    for i, conv in enumerate(net.config.convs):
        cols, (b, ho, wo) = _im2col(a, conv)
        w = net.params[f"conv{i}.w"]
        z = cols @ w.reshape(-1, w.shape[-1]) + net.params[f"conv{i}.b"]
        z = z.reshape(b, ho, wo, -1)
        cols_list.append((cols, a.shape))
        pre_list.append(z)
        a = np.maximum(z, 0.0) if conv.relu else z
    h = a
    x = h.mean(axis=(1, 2))
    logits = x @ net.params["W_logits"]
    pre_emb = h.reshape(h.shape[0], -1) @ net.params["W_emb"]
    emb, collapsed = l2_normalize(pre_emb, epsilon)
    return ForwardTrace(inputs, cols_list, pre_list, h, x, pre_emb, logits, emb, collapsed,
                        id(net), net.version, {"epsilon": epsilon})


def normalize_backward(grad, embedding, pre_embedding, epsilon: float = NORM_EPS):
    """Pull a gradient back through row normalization: ``(g - (g.e) e) / max(|v|, eps)``."""
    norms = np.linalg.norm(pre_embedding, axis=1, keepdims=True)
    radial = np.sum(grad * embedding, axis=1, keepdims=True)
    return (grad - radial * embedding) / np.maximum(norms, epsilon)


def backward(net: TwoHeadNet, trace: ForwardTrace, grad_logits=None, grad_embedding=None,
             need_input_grad: bool = False):
    """Reverse pass. Returns ``(param_grads, input_grad)``.

    Missing head gradients count as zero. ``input_grad`` is ``None`` unless
    requested.
    """
    if trace.net_id != id(net) or trace.net_version != net.version:
        raise TraceMismatch("trace was produced by a different network state")
    h = trace.h
    b, hh, ww, c = h.shape
    grads = {}
    dh = np.zeros_like(h)
    if grad_logits is not None:
        grad_logits = np.asarray(grad_logits, dtype=np.float64)
        if grad_logits.shape != trace.logits.shape:
            raise ShapeError("grad_logits shape mismatch")
        grads["W_logits"] = trace.x.T @ grad_logits
        dx = grad_logits @ net.params["W_logits"].T
        dh += dx[:, None, None, :] / (hh * ww)
    else:
        grads["W_logits"] = np.zeros_like(net.params["W_logits"])
    if grad_embedding is not None:
        grad_embedding = np.asarray(grad_embedding, dtype=np.float64)
        if grad_embedding.shape != trace.embedding.shape:
            raise ShapeError("grad_embedding shape mismatch")
        g_pre = normalize_backward(grad_embedding, trace.embedding, trace.pre_embedding,
                                   trace.extra.get("epsilon", NORM_EPS))
        grads["W_emb"] = h.reshape(b, -1).T @ g_pre
        dh += (g_pre @ net.params["W_emb"].T).reshape(h.shape)
    else:
        grads["W_emb"] = np.zeros_like(net.params["W_emb"])
    da = dh
    input_grad = None
    for i in reversed(range(len(net.config.convs))):
        conv = net.config.convs[i]
        z = trace.pre_acts[i]
        dz = da * (z > 0) if conv.relu else da
        cols, in_shape = trace.cols[i]
        w = net.params[f"conv{i}.w"]
        dz2 = dz.reshape(-1, dz.shape[-1])
        grads[f"conv{i}.w"] = (cols.T @ dz2).reshape(w.shape)
        grads[f"conv{i}.b"] = dz2.sum(axis=0)
        if i > 0 or need_input_grad:
            dcols = dz2 @ w.reshape(-1, w.shape[-1]).T
            da = _col2im(dcols, in_shape, z.shape[1:3], conv)
    if need_input_grad:
        input_grad = da
    return grads, input_grad


def predict(net: TwoHeadNet, inputs, batch_size: int = 256):
    """Class predictions, normalized embeddings and pooled features ``x`` for a dataset."""
    preds, embs, pooled = [], [], []
    inputs = np.asarray(inputs)
    for start in range(0, inputs.shape[0], batch_size):
        tr = forward(net, inputs[start:start + batch_size])
        preds.append(np.argmax(tr.logits, axis=1))
        embs.append(tr.embedding)
        pooled.append(tr.x)
    return np.concatenate(preds), np.concatenate(embs), np.concatenate(pooled)


# -- checkpoints -------------------------------------------------------------
#
# Text format, one item per line:
#   tripletreg-checkpoint v1
#   config <json>
#   param <name> <ndim> <dim_0> ... <dim_n-1>
#   <value> (float.hex, row-major, one per line)
#   ...


def save_checkpoint(net: TwoHeadNet, path) -> None:
    with open(path, "w") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        fh.write("config " + json.dumps(net.config.to_dict(), sort_keys=True) + "\n")
        for name in sorted(net.params):
            arr = net.params[name]
            fh.write(f"param {name} {arr.ndim} {' '.join(map(str, arr.shape))}\n")
            fh.write("\n".join(float(v).hex() for v in arr.ravel()))
            fh.write("\n")


def load_checkpoint(path) -> TwoHeadNet:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise InvalidConfig(f"{path} is not a checkpoint")
    if not lines[1].startswith("config "):
        raise InvalidConfig("missing config line")
    cfg = json.loads(lines[1][len("config "):])
    config = NetConfig(tuple(cfg["input_shape"]), cfg["n_classes"], cfg["d_emb"],
                       tuple(ConvSpec(**c) for c in cfg["convs"]))
    params = {}
    i = 2
    while i < len(lines):
        head = lines[i].split()
        if not head or head[0] != "param":
            raise InvalidConfig(f"line {i + 1}: expected a param header")
        name, ndim = head[1], int(head[2])
        shape = tuple(int(v) for v in head[3:3 + ndim])
        size = int(np.prod(shape))
        values = [float.fromhex(v) for v in lines[i + 1:i + 1 + size]]
        if len(values) != size:
            raise InvalidConfig(f"param {name} is truncated")
        params[name] = np.array(values, dtype=np.float64).reshape(shape)
        i += 1 + size
    expected = config.param_shapes()
    if set(params) != set(expected) or any(params[k].shape != tuple(expected[k]) for k in expected):
        raise InvalidConfig("checkpoint parameters do not match its config")
    return TwoHeadNet(config, params)
