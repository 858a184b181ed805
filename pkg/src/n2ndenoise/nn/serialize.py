"""Binary model files.

Layout (little-endian)::

    "N2NF" | u32 version | u32 n_layers
    n_layers x (u32 tag, u32 k, u32 in_ch, u32 out_ch)
    float32 blobs in layer order: conv kernel, bias; BN gamma, beta,
        running_mean, running_var
    optional: "ADAM" | u64 t | m blobs | v blobs   (trainable-parameter order)
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .adam import AdamState
from .layers import Activation, BatchNormLayer, ConvLayer
from .model import ArchConfig, FcnnModel

MAGIC = b"N2NF"
ADAM_TAG = b"ADAM"
VERSION = 1

TAG_CONV, TAG_BN, TAG_LEAKY, TAG_TANH = 1, 2, 3, 4
_ACT_TAGS = {"leaky_relu": TAG_LEAKY, "tanh": TAG_TANH}

_F32 = np.dtype("<f4")


def _blob(a) -> bytes:
    return np.ascontiguousarray(a, dtype=_F32).tobytes()


def model_to_bytes(model: FcnnModel, state: AdamState | None = None) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(model.layers))]
    blobs = []
    for layer in model.layers:
        if isinstance(layer, ConvLayer):
            parts.append(struct.pack("<4I", TAG_CONV, layer.k, layer.in_ch, layer.out_ch))
            blobs += [layer.kernel, layer.bias]
        elif isinstance(layer, BatchNormLayer):
            c = layer.channels
            parts.append(struct.pack("<4I", TAG_BN, 0, c, c))
            blobs += [layer.gamma, layer.beta, layer.running_mean, layer.running_var]
        else:
            c = layer.channels
            parts.append(struct.pack("<4I", _ACT_TAGS[layer.kind], 0, c, c))
    parts += [_blob(b) for b in blobs]
    if state is not None:
        parts += [ADAM_TAG, struct.pack("<Q", state.t)]
        parts += [_blob(m) for m in state.m] + [_blob(v) for v in state.v]
    return b"".join(parts)


def save_model(model: FcnnModel, path, state: AdamState | None = None) -> None:
    Path(path).write_bytes(model_to_bytes(model, state))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("model file truncated")
        out = self.data[self.pos: self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(4 * n), dtype=_F32).astype(np.float32).reshape(shape)


def model_from_bytes(data: bytes, dtype=np.float32):
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise FormatError("bad magic; not an N2NF model file")
    version, n_layers = r.unpack("<II")
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version}")
    descs = [r.unpack("<4I") for _ in range(n_layers)]

    layers = []
    for tag, k, cin, cout in descs:
        if tag == TAG_CONV:
            kernel = r.array((k, cin, cout))
            layers.append(ConvLayer(kernel, r.array((cout,))))
        elif tag == TAG_BN:
            layers.append(BatchNormLayer(*(r.array((cin,)) for _ in range(4))))
        elif tag == TAG_LEAKY:
            layers.append(Activation("leaky_relu", cin))
        elif tag == TAG_TANH:
            layers.append(Activation("tanh", cin))
        else:
            raise FormatError(f"unknown layer tag {tag}")
    convs = [l for l in layers if isinstance(l, ConvLayer)]
    if not convs:
        raise FormatError("model has no conv layers")
    arch = ArchConfig(len(convs), convs[0].out_ch, convs[0].k)
    model = FcnnModel(layers, arch)
    if dtype != np.float32:
        model = model.astype(dtype)

    state = None
    if r.pos < len(data):
        if r.take(4) != ADAM_TAG:
            raise FormatError("unexpected trailing chunk")
        (t,) = r.unpack("<Q")
        shapes = [p.shape for p in model.parameters()]
        m = [r.array(s).astype(dtype) for s in shapes]
        v = [r.array(s).astype(dtype) for s in shapes]
        state = AdamState(m, v, t)
        if r.pos != len(data):
            raise FormatError("trailing bytes after optimizer chunk")
    return model, state


def load_model(path, dtype=np.float32):
    """Return ``(model, adam_state_or_None)``."""
    return model_from_bytes(Path(path).read_bytes(), dtype)
