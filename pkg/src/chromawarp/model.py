"""White-box target classifier: a small sequential CNN with deterministic
initialization, input-gradient backprop, a toy training loop, and a
portable binary weight format.

Layers operate on (N, C, H, W) float32 batches.  Each layer caches its
forward context, so one forward/backward pair may be in flight per model.
"""

from __future__ import annotations

import struct

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import FormatError, Rng, UsageError
from .colorspace import RGB, Image

__all__ = [
    "Conv2d", "Relu", "MaxPool2d", "Flatten", "Dense",
    "ClassifierModel", "REFERENCE_ARCH",
    "init_model", "forward", "backward_input", "train_toy",
    "save_weights", "load_weights", "predict", "accuracy",
]

# Reference desk-scale architecture for 3x32x32 inputs, 10 classes.
REFERENCE_ARCH = [
    {"type": "conv2d", "out_channels": 16, "kernel": 3, "stride": 1, "pad": 1},
    {"type": "relu"},
    {"type": "maxpool2d", "window": 2, "stride": 2},
    {"type": "conv2d", "out_channels": 32, "kernel": 3, "stride": 1, "pad": 1},
    {"type": "relu"},
    {"type": "maxpool2d", "window": 2, "stride": 2},
    {"type": "flatten"},
    {"type": "dense", "out_features": 10},
]


class Conv2d:
    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel, stride=1, pad=0):
        if min(in_channels, out_channels, kernel, stride) < 1 or pad < 0:
            raise UsageError("bad conv2d hyperparameters")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        self.weight = np.zeros((out_channels, in_channels, kernel, kernel), np.float32)
        self.bias = np.zeros(out_channels, np.float32)
        self._ctx = None

    def _im2col(self, xp):
        # (N, C, Hp, Wp) -> (N, OH, OW, C*k*k)
        k, s = self.kernel, self.stride
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        n, c, oh, ow = win.shape[:4]
        return win.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh, ow, c * k * k)

    def forward(self, x):
        p = self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        cols = self._im2col(xp)
        n, oh, ow, _ = cols.shape
        wmat = self.weight.reshape(self.out_channels, -1)
        out = cols.reshape(n * oh * ow, -1) @ wmat.T + self.bias
        self._ctx = (cols, x.shape, xp.shape)
        return out.reshape(n, oh, ow, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, g):
        cols, x_shape, xp_shape = self._ctx
        n, oh, ow, _ = cols.shape
        k, s, p = self.kernel, self.stride, self.pad
        gmat = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, self.out_channels)

        self.grad_weight = (gmat.T @ cols.reshape(n * oh * ow, -1)).reshape(self.weight.shape)
        self.grad_bias = gmat.sum(axis=0)

        gcols = (gmat @ self.weight.reshape(self.out_channels, -1))
        gcols = gcols.reshape(n, oh, ow, self.in_channels, k, k)
        gxp = np.zeros(xp_shape, dtype=g.dtype)
        for di in range(k):
            for dj in range(k):
                gxp[:, :, di:di + s * oh:s, dj:dj + s * ow:s] += \
                    gcols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
        if p:
            gxp = gxp[:, :, p:p + x_shape[2], p:p + x_shape[3]]
        return gxp


class Relu:
    kind = "relu"

    def __init__(self):
        self._ctx = None

    def forward(self, x):
        self._ctx = x > 0
        return np.maximum(x, 0)

    def backward(self, g):
        return g * self._ctx


class MaxPool2d:
    kind = "maxpool2d"

    def __init__(self, window=2, stride=2):
        if window < 1 or stride < 1:
            raise UsageError("bad maxpool2d hyperparameters")
        self.window = window
        self.stride = stride
        self._ctx = None

    def forward(self, x):
        k, s = self.window, self.stride
        win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        n, c, oh, ow = win.shape[:4]
        flat = win.reshape(n, c, oh, ow, k * k)
        arg = flat.argmax(axis=-1)  # first max in row-major window order
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        self._ctx = (arg, x.shape)
        return out

    def backward(self, g):
        arg, x_shape = self._ctx
        k, s = self.window, self.stride
        n, c, oh, ow = g.shape
        gx = np.zeros(x_shape, dtype=g.dtype)
        ni, ci, ohi, owi = np.indices((n, c, oh, ow), sparse=True)
        np.add.at(gx, (ni, ci, ohi * s + arg // k, owi * s + arg % k), g)
        return gx


class Flatten:
    kind = "flatten"

    def __init__(self):
        self._ctx = None

    def forward(self, x):
        self._ctx = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._ctx)


class Dense:
    kind = "dense"

    def __init__(self, in_features, out_features):
        if min(in_features, out_features) < 1:
            raise UsageError("bad dense hyperparameters")
        self.in_features = in_features
        self.out_features = out_features
        self.weight = np.zeros((out_features, in_features), np.float32)
        self.bias = np.zeros(out_features, np.float32)
        self._ctx = None

    def forward(self, x):
        self._ctx = x
        return x @ self.weight.T + self.bias

    def backward(self, g):
        x = self._ctx
        self.grad_weight = g.T @ x
        self.grad_bias = g.sum(axis=0)
        return g @ self.weight


class ClassifierModel:
    """Ordered layers plus the input shape they were built for."""

    def __init__(self, layers, input_shape):
        if not layers or layers[-1].kind != "dense":
            raise UsageError("classifier must end with a dense layer")
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.num_classes = layers[-1].out_features
        self._has_ctx = False

    def parameters(self):
        """(layer, attribute name) pairs for every trainable tensor."""
        out = []
        for layer in self.layers:
            if hasattr(layer, "weight"):
                out.append((layer, "weight"))
                out.append((layer, "bias"))
        return out

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise UsageError(f"expected batch of {self.input_shape}, got {x.shape}")
        for layer in self.layers:
            x = layer.forward(x)
        self._has_ctx = True
        return x

    def backward_batch(self, grad_logits: np.ndarray) -> np.ndarray:
        if not self._has_ctx:
            raise UsageError("backward_batch called before forward_batch")
        g = grad_logits
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g


def _build_layers(arch, input_shape):
    """Instantiate layers from specs, propagating shapes to catch mismatches."""
    c, h, w = input_shape
    flat = None  # feature count once flattened
    layers = []
    for i, spec in enumerate(arch):
        kind = spec.get("type")
        if kind == "conv2d":
            if flat is not None:
                raise UsageError(f"layer {i}: conv2d after flatten")
            layer = Conv2d(c, spec["out_channels"], spec["kernel"],
                           spec.get("stride", 1), spec.get("pad", 0))
            h = (h + 2 * layer.pad - layer.kernel) // layer.stride + 1
            w = (w + 2 * layer.pad - layer.kernel) // layer.stride + 1
            c = layer.out_channels
            if h < 1 or w < 1:
                raise UsageError(f"layer {i}: conv2d output collapses to {h}x{w}")
        elif kind == "relu":
            layer = Relu()
        elif kind == "maxpool2d":
            if flat is not None:
                raise UsageError(f"layer {i}: maxpool2d after flatten")
            layer = MaxPool2d(spec.get("window", 2), spec.get("stride", 2))
            h = (h - layer.window) // layer.stride + 1
            w = (w - layer.window) // layer.stride + 1
            if h < 1 or w < 1:
                raise UsageError(f"layer {i}: maxpool2d output collapses to {h}x{w}")
        elif kind == "flatten":
            layer = Flatten()
            flat = c * h * w
        elif kind == "dense":
            if flat is None:
                raise UsageError(f"layer {i}: dense requires a preceding flatten")
            layer = Dense(flat, spec["out_features"])
            flat = layer.out_features
        else:
            raise UsageError(f"layer {i}: unknown layer type {kind!r}")
        layers.append(layer)
    return layers


def init_model(arch, input_shape, rng: Rng) -> ClassifierModel:
    """Build a model with uniform(-s, s) weights, s = sqrt(6/(fan_in+fan_out))."""
    layers = _build_layers(arch, input_shape)
    for layer in layers:
        if layer.kind == "conv2d":
            k2 = layer.kernel * layer.kernel
            bound = np.sqrt(6.0 / (layer.in_channels * k2 + layer.out_channels * k2))
            layer.weight = rng.uniform_array(layer.weight.shape, -bound, bound, np.float32)
        elif layer.kind == "dense":
            bound = np.sqrt(6.0 / (layer.in_features + layer.out_features))
            layer.weight = rng.uniform_array(layer.weight.shape, -bound, bound, np.float32)
    return ClassifierModel(layers, input_shape)


def forward(model: ClassifierModel, img: Image) -> np.ndarray:
    """Logits for one RGB image; retains context for backward_input."""
    if img.space != RGB:
        raise UsageError(f"model input must be rgb, got {img.space}")
    return model.forward_batch(img.pixels[None].astype(np.float32, copy=False))[0]


def backward_input(model: ClassifierModel, grad_logits: np.ndarray) -> np.ndarray:
    """d(scalar)/d(input image) for the last forward() call."""
    g = np.asarray(grad_logits, dtype=np.float32)
    if g.shape != (model.num_classes,):
        raise UsageError(f"expected {model.num_classes} logit gradients, got {g.shape}")
    return model.backward_batch(g[None])[0]


def _softmax_cross_entropy(logits, labels):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    loss = -np.mean(np.log(p[np.arange(n), labels] + 1e-12))
    grad = p
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def train_toy(model: ClassifierModel, images, labels, epochs: int, lr: float,
              rng: Rng, batch_size: int = 32) -> ClassifierModel:
    """Minimize softmax cross-entropy with Adam; deterministic given the rng."""
    from .attack import AdamState, adam_step

    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels)
    if images.shape[0] == 0:
        raise UsageError("training dataset is empty")
    if labels.max(initial=0) >= model.num_classes or labels.min(initial=0) < 0:
        raise UsageError("label outside model class range")

    params = model.parameters()
    states = [AdamState.like(getattr(layer, name)) for layer, name in params]
    n = images.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            logits = model.forward_batch(images[idx])
            _, grad = _softmax_cross_entropy(logits, labels[idx])
            model.backward_batch(grad.astype(np.float32))
            for (layer, name), state in zip(params, states):
                grad_param = getattr(layer, "grad_" + name)
                setattr(layer, name, adam_step(state, getattr(layer, name), grad_param, lr))
    return model


def predict(model: ClassifierModel, images) -> np.ndarray:
    """Argmax class per image for an (N, C, H, W) batch."""
    return model.forward_batch(np.asarray(images, dtype=np.float32)).argmax(axis=1)


def accuracy(model: ClassifierModel, images, labels) -> float:
    return float(np.mean(predict(model, images) == np.asarray(labels)))


# Binary weight format, little-endian throughout:
#   magic "CFN1", u32 record count, then per record
#   u8 tag, u32 rank, u32 dims[rank], f32 payload.
# Tags: 0 input (dims c,h,w; no payload), 1 conv2d (dims out,in,k,k,stride,pad;
# payload weights then biases), 2 relu, 3 maxpool2d (dims window,stride),
# 4 flatten, 5 dense (dims out,in; payload weights then biases).
_MAGIC = b"CFN1"
_TAG_INPUT, _TAG_CONV, _TAG_RELU, _TAG_POOL, _TAG_FLATTEN, _TAG_DENSE = range(6)


def save_weights(model: ClassifierModel, path):
    records = [(_TAG_INPUT, model.input_shape, None)]
    for layer in model.layers:
        if layer.kind == "conv2d":
            dims = (layer.out_channels, layer.in_channels, layer.kernel,
                    layer.kernel, layer.stride, layer.pad)
            payload = np.concatenate([layer.weight.ravel(), layer.bias])
        elif layer.kind == "relu":
            dims, payload = (), None
        elif layer.kind == "maxpool2d":
            dims, payload = (layer.window, layer.stride), None
        elif layer.kind == "flatten":
            dims, payload = (), None
        else:
            dims = (layer.out_features, layer.in_features)
            payload = np.concatenate([layer.weight.ravel(), layer.bias])
        tag = {"conv2d": _TAG_CONV, "relu": _TAG_RELU, "maxpool2d": _TAG_POOL,
               "flatten": _TAG_FLATTEN, "dense": _TAG_DENSE}[layer.kind]
        records.append((tag, dims, payload))

    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", _MAGIC, len(records)))
        for tag, dims, payload in records:
            fh.write(struct.pack("<BI", tag, len(dims)))
            if dims:
                fh.write(struct.pack(f"<{len(dims)}I", *dims))
            if payload is not None:
                fh.write(np.asarray(payload, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, nbytes, field):
        if self.pos + nbytes > len(self.data):
            raise FormatError(f"truncated weight file: needed {nbytes} bytes for {field}, "
                              f"got {len(self.data) - self.pos}")
        chunk = self.data[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return chunk


def load_weights(path) -> ClassifierModel:
    """Rebuild a ClassifierModel; the round trip reproduces logits bit-exactly."""
    with open(path, "rb") as fh:
        rd = _Reader(fh.read())

    magic = rd.take(4, "magic")
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    (count,) = struct.unpack("<I", rd.take(4, "record count"))

    input_shape = None
    arch = []
    payloads = []
    for r in range(count):
        (tag,) = struct.unpack("<B", rd.take(1, f"record {r} tag"))
        (rank,) = struct.unpack("<I", rd.take(4, f"record {r} rank"))
        dims = struct.unpack(f"<{rank}I", rd.take(4 * rank, f"record {r} dims")) if rank else ()
        if tag == _TAG_INPUT:
            if r != 0 or rank != 3:
                raise FormatError(f"record {r}: input record must come first with rank 3")
            input_shape = dims
            continue
        if tag == _TAG_CONV:
            if rank != 6:
                raise FormatError(f"record {r}: conv2d needs rank 6, got {rank}")
            out_c, in_c, kh, kw, stride, pad = dims
            if kh != kw:
                raise FormatError(f"record {r}: non-square kernel {kh}x{kw}")
            n = out_c * in_c * kh * kw + out_c
            raw = rd.take(4 * n, f"record {r} conv2d payload")
            arch.append({"type": "conv2d", "out_channels": out_c, "kernel": kh,
                         "stride": stride, "pad": pad, "_in": in_c})
            payloads.append(np.frombuffer(raw, dtype="<f4"))
        elif tag == _TAG_RELU:
            arch.append({"type": "relu"})
            payloads.append(None)
        elif tag == _TAG_POOL:
            if rank != 2:
                raise FormatError(f"record {r}: maxpool2d needs rank 2, got {rank}")
            arch.append({"type": "maxpool2d", "window": dims[0], "stride": dims[1]})
            payloads.append(None)
        elif tag == _TAG_FLATTEN:
            arch.append({"type": "flatten"})
            payloads.append(None)
        elif tag == _TAG_DENSE:
            if rank != 2:
                raise FormatError(f"record {r}: dense needs rank 2, got {rank}")
            out_f, in_f = dims
            raw = rd.take(4 * (out_f * in_f + out_f), f"record {r} dense payload")
            arch.append({"type": "dense", "out_features": out_f, "_in": in_f})
            payloads.append(np.frombuffer(raw, dtype="<f4"))
        else:
            raise FormatError(f"record {r}: unknown layer tag {tag}")
    if rd.pos != len(rd.data):
        raise FormatError(f"{len(rd.data) - rd.pos} trailing bytes after last record")
    if input_shape is None:
        raise FormatError("missing input record")

    if not np.all(np.isfinite(np.concatenate([p for p in payloads if p is not None] or [np.zeros(1)]))):
        raise FormatError("weight payload contains non-finite values")

    try:
        layers = _build_layers(arch, input_shape)
    except UsageError as e:
        raise FormatError(f"inconsistent layer chain: {e}") from e
    for spec, payload, layer in zip(arch, payloads, layers):
        declared = spec.get("_in")
        if declared is not None:
            actual = layer.in_channels if layer.kind == "conv2d" else layer.in_features
            if declared != actual:
                raise FormatError(f"{layer.kind} declares {declared} input features, "
                                  f"layer chain implies {actual}")
        if payload is not None:
            nw = layer.weight.size
            layer.weight = payload[:nw].reshape(layer.weight.shape).copy()
            layer.bias = payload[nw:].copy()
    return ClassifierModel(layers, input_shape)
