"""Layer types and their forward/backward passes.

Activations are laid out ``(batch, time, channels)`` with channels fastest.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InsufficientStatisticsError, ShapeError
from . import kernels

LEAKY_SLOPE = 0.01
BN_EPS = 1e-5
BN_MOMENTUM = 0.1  # weight of the new batch statistic


@dataclass
class ConvLayer:
    kernel: np.ndarray  # (k, in_ch, out_ch)
    bias: np.ndarray  # (out_ch,)

    @property
    def k(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_ch(self) -> int:
        return self.kernel.shape[1]

    @property
    def out_ch(self) -> int:
        return self.kernel.shape[2]

    def params(self):
        return [self.kernel, self.bias]


@dataclass
class BatchNormLayer:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = BN_EPS
    momentum: float = BN_MOMENTUM

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32) -> "BatchNormLayer":
        return cls(np.ones(channels, dtype), np.zeros(channels, dtype),
                   np.zeros(channels, dtype), np.ones(channels, dtype))

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    def params(self):
        return [self.gamma, self.beta]


@dataclass
class Activation:
    kind: str  # "leaky_relu" or "tanh"
    channels: int = 0

    def params(self):
        return []


def conv1d_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    if x.ndim != 3 or x.shape[2] != layer.in_ch:
        raise ShapeError(f"conv expects (B, T, {layer.in_ch}), got {x.shape}")
    x = np.ascontiguousarray(x, dtype=layer.kernel.dtype)
    return kernels.conv1d_forward(x, layer.kernel, layer.bias)


def conv1d_backward(x: np.ndarray, layer: ConvLayer, grad_out: np.ndarray):
    """Return ``(grad_x, grad_kernel, grad_bias)``."""
    if x.ndim != 3 or x.shape[2] != layer.in_ch:
        raise ShapeError(f"conv expects (B, T, {layer.in_ch}), got {x.shape}")
    if grad_out.shape != x.shape[:2] + (layer.out_ch,):
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match forward output")
    dt = layer.kernel.dtype
    return kernels.conv1d_backward(np.ascontiguousarray(x, dtype=dt), layer.kernel,
                                   np.ascontiguousarray(grad_out, dtype=dt))


@dataclass
class BNCache:
    xhat: np.ndarray
    inv_std: np.ndarray
    mode: str = "train"
    extra: dict = field(default_factory=dict)


def batchnorm_forward(x: np.ndarray, layer: BatchNormLayer, mode: str,
                      update_stats: bool = True):
    """Return ``(y, cache)``.

    Train mode normalizes with biased batch statistics over (batch, time) and,
    when ``update_stats`` is set, folds them into the running estimates.
    """
    if x.shape[-1] != layer.channels:
        raise ShapeError(f"batchnorm expects {layer.channels} channels, got {x.shape}")
    if mode == "train":
        n = x.shape[0] * x.shape[1]
        if n < 2:
            raise InsufficientStatisticsError("train-mode batchnorm needs batch*time >= 2")
        mean = x.mean(axis=(0, 1))
        var = x.var(axis=(0, 1))
        if update_stats:
            m = layer.momentum
            # running variance tracks the unbiased estimate
            layer.running_mean[...] = (1 - m) * layer.running_mean + m * mean
            layer.running_var[...] = (1 - m) * layer.running_var + m * var * (n / (n - 1))
    elif mode == "infer":
        mean, var = layer.running_mean, layer.running_var
    else:
        raise ValueError(f"unknown mode {mode!r}")
    inv_std = 1.0 / np.sqrt(var + layer.eps)
    xhat = (x - mean) * inv_std
    y = xhat * layer.gamma + layer.beta
    return y.astype(x.dtype, copy=False), BNCache(xhat, inv_std, mode)


def batchnorm_backward(grad_out: np.ndarray, layer: BatchNormLayer, cache: BNCache):
    """Return ``(grad_x, grad_gamma, grad_beta)``."""
    xhat, inv_std = cache.xhat, cache.inv_std
    g_gamma = np.sum(grad_out * xhat, axis=(0, 1))
    g_beta = np.sum(grad_out, axis=(0, 1))
    gxhat = grad_out * layer.gamma
    if cache.mode == "infer":
        return gxhat * inv_std, g_gamma, g_beta
    n = grad_out.shape[0] * grad_out.shape[1]
    gx = (inv_std / n) * (n * gxhat - gxhat.sum(axis=(0, 1))
                          - xhat * np.sum(gxhat * xhat, axis=(0, 1)))
    return gx.astype(grad_out.dtype, copy=False), g_gamma, g_beta


def activation_forward(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "leaky_relu":
        return np.where(x >= 0, x, x * x.dtype.type(LEAKY_SLOPE))
    if kind == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(x: np.ndarray, y: np.ndarray, kind: str,
                        grad_out: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the activation input; ``x``/``y`` are its input/output."""
    if kind == "leaky_relu":
        return np.where(x >= 0, grad_out, grad_out * grad_out.dtype.type(LEAKY_SLOPE))
    if kind == "tanh":
        return grad_out * (1 - y * y)
    raise ValueError(f"unknown activation {kind!r}")
