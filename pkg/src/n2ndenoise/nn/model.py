"""The fully-convolutional denoiser: conv/BN/LeakyReLU blocks and a 1x1 tanh head."""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from .layers import (
    LEAKY_SLOPE,
    Activation,
    BatchNormLayer,
    ConvLayer,
    activation_backward,
    activation_forward,
    batchnorm_backward,
    batchnorm_forward,
    conv1d_backward,
    conv1d_forward,
)


@dataclass(frozen=True)
class ArchConfig:
    """Topology knobs. Defaults give six conv layers of 55 filters of
    length 30, the last replaced by a single 1x1 filter."""

    n_conv: int = 6
    channels: int = 55
    kernel: int = 30

    def validate(self):
        if self.n_conv < 2:
            raise ConfigError("need at least two conv layers (body + 1x1 head)")
        if self.channels < 1 or self.kernel < 1:
            raise ConfigError("channels and kernel length must be positive")

    @property
    def receptive_field(self) -> int:
        return (self.n_conv - 1) * (self.kernel - 1) + 1


class FcnnModel:
    def __init__(self, layers, arch: ArchConfig, seed: int | None = None):
        self.layers = layers
        self.arch = arch
        self.seed = seed

    @property
    def dtype(self):
        return self.layers[0].kernel.dtype

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def parameter_names(self) -> list[str]:
        names = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, ConvLayer):
                names += [f"conv{i}.kernel", f"conv{i}.bias"]
            elif isinstance(layer, BatchNormLayer):
                names += [f"bn{i}.gamma", f"bn{i}.beta"]
        return names

    def n_parameters(self, trainable_only=True) -> int:
        n = sum(p.size for p in self.parameters())
        if not trainable_only:
            n += sum(l.running_mean.size + l.running_var.size
                     for l in self.layers if isinstance(l, BatchNormLayer))
        return n

    def conv_parameter_count(self) -> int:
        return sum(l.kernel.size + l.bias.size for l in self.layers
                   if isinstance(l, ConvLayer))

    def state_arrays(self) -> list[np.ndarray]:
        """All arrays that define the model, including BN running statistics."""
        out = []
        for layer in self.layers:
            if isinstance(layer, ConvLayer):
                out += [layer.kernel, layer.bias]
            elif isinstance(layer, BatchNormLayer):
                out += [layer.gamma, layer.beta, layer.running_mean, layer.running_var]
        return out

    def copy(self) -> "FcnnModel":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "FcnnModel":
        m = self.copy()
        for layer in m.layers:
            for name, val in vars(layer).items():
                if isinstance(val, np.ndarray):
                    setattr(layer, name, val.astype(dtype))
        return m


def init_model(seed: int, arch: ArchConfig | None = None, dtype=np.float32) -> FcnnModel:
    """Kaiming-uniform conv weights (gain for LeakyReLU slope 0.01), zero biases."""
    arch = arch or ArchConfig()
    arch.validate()
    rng = np.random.default_rng(seed)
    layers = []
    in_ch = 1
    gain2 = 2.0 / (1.0 + LEAKY_SLOPE ** 2)
    for i in range(arch.n_conv):
        last = i == arch.n_conv - 1
        k, out_ch = (1, 1) if last else (arch.kernel, arch.channels)
        bound = np.sqrt(3.0 * gain2 / (k * in_ch))
        kernel = rng.uniform(-bound, bound, size=(k, in_ch, out_ch)).astype(dtype)
        layers.append(ConvLayer(kernel, np.zeros(out_ch, dtype)))
        if last:
            layers.append(Activation("tanh", out_ch))
        else:
            layers.append(BatchNormLayer.fresh(out_ch, dtype))
            layers.append(Activation("leaky_relu", out_ch))
        in_ch = out_ch
    return FcnnModel(layers, arch, seed)


def _check_input(model, x):
    if x.ndim != 3 or x.shape[2] != 1:
        raise ShapeError(f"model input must be (batch, time, 1), got {x.shape}")


def fcnn_forward(model: FcnnModel, x: np.ndarray, mode: str = "infer",
                 update_stats: bool = False) -> np.ndarray:
    return forward_with_cache(model, x, mode, update_stats)[0]


def forward_with_cache(model: FcnnModel, x: np.ndarray, mode: str = "train",
                       update_stats: bool = True):
    _check_input(model, x)
    h = np.ascontiguousarray(x, dtype=model.dtype)
    cache = []
    for layer in model.layers:
        if isinstance(layer, ConvLayer):
            cache.append(h)
            h = conv1d_forward(h, layer)
        elif isinstance(layer, BatchNormLayer):
            h, c = batchnorm_forward(h, layer, mode, update_stats)
            cache.append(c)
        else:
            y = activation_forward(h, layer.kind)
            cache.append((h, y))
            h = y
    return h, cache


def fcnn_backward(model: FcnnModel, cache, grad_out: np.ndarray) -> list[np.ndarray]:
    """Gradients aligned with ``model.parameters()``."""
    grads = []
    g = grad_out
    for layer, c in zip(reversed(model.layers), reversed(cache)):
        if isinstance(layer, ConvLayer):
            g, gk, gb = conv1d_backward(c, layer, g)
            grads += [gb, gk]
        elif isinstance(layer, BatchNormLayer):
            g, gg, gbeta = batchnorm_backward(g, layer, c)
            grads += [gbeta, gg]
        else:
            g = activation_backward(c[0], c[1], layer.kind, g)
    grads.reverse()
    return grads


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error and its gradient w.r.t. ``pred``."""
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} and target {target.shape} differ")
    diff = pred - target
    loss = float(np.mean(np.square(diff, dtype=np.float64)))
    return loss, (2.0 / diff.size) * diff


def loss_and_grads(model: FcnnModel, x, target, update_stats: bool = True):
    pred, cache = forward_with_cache(model, x, "train", update_stats)
    target = np.asarray(target, dtype=model.dtype).reshape(pred.shape)
    loss, g = mse_loss(pred, target)
    return loss, fcnn_backward(model, cache, g.astype(model.dtype, copy=False))
