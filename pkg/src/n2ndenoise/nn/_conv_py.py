"""Pure numpy convolution kernels (fallback when the extension is missing).

The convolution is accumulated one kernel tap at a time: each tap is a
(B*T, C) @ (C, O) product on a shifted view of the zero-padded input.
"""
import numpy as np


def _pad(x, k):
    left = (k - 1) // 2
    return np.pad(x, ((0, 0), (left, k - 1 - left), (0, 0)))


def conv1d_forward(x, kernel, bias):
    B, T, _ = x.shape
    k, _, O = kernel.shape
    xp = _pad(x, k)
    out = np.empty((B, T, O), dtype=x.dtype)
    out[...] = bias
    for d in range(k):
        out += xp[:, d:d + T, :] @ kernel[d]
    return out


def conv1d_backward(x, kernel, grad_out):
    B, T, C = x.shape
    k = kernel.shape[0]
    left = (k - 1) // 2
    xp = _pad(x, k)
    gxp = np.zeros_like(xp)
    gk = np.empty_like(kernel)
    g2 = grad_out.reshape(B * T, -1)
    for d in range(k):
        gk[d] = xp[:, d:d + T, :].reshape(B * T, C).T @ g2
        gxp[:, d:d + T, :] += grad_out @ kernel[d].T
    gb = grad_out.sum(axis=(0, 1))
    return gxp[:, left:left + T, :], gk, gb
