"""From-scratch building blocks for the training harness.

Every block comes as a forward returning (out, cache) and a backward
consuming (grad_out, cache). All arrays are float64 numpy; convolution is
im2col + matmul with an explicit col2im scatter for the input gradient.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch


# ----------------------------------------------------------------------
# convolution

def _conv_out_size(size: int, kernel: int, stride: int, padding: int) -> int:
    out = (size + 2 * padding - kernel) // stride + 1
    if out < 1:
        raise ShapeMismatch(
            f"kernel {kernel} with stride {stride}, padding {padding} "
            f"does not fit input size {size}"
        )
    return out


def _im2col(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    b, c, h, w = x.shape
    ho = _conv_out_size(h, kernel, stride, padding)
    wo = _conv_out_size(w, kernel, stride, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((b, c, kernel, kernel, ho, wo), dtype=x.dtype)
    for i in range(kernel):
        for j in range(kernel):
            cols[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols


def _col2im(cols: np.ndarray, x_shape: tuple, kernel: int, stride: int, padding: int) -> np.ndarray:
    b, c, h, w = x_shape
    _, _, _, _, ho, wo = cols.shape
    xp = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    for i in range(kernel):
        for j in range(kernel):
            xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    if padding == 0:
        return xp
    return xp[:, :, padding : padding + h, padding : padding + w]


def conv2d_forward(x, weights, bias, stride: int = 1, padding: int = 0):
    """x (B, C, H, W), weights (F, C, k, k), bias (F,) -> (B, F, Ho, Wo)."""
    if x.ndim != 4 or weights.ndim != 4:
        raise ShapeMismatch("conv2d expects 4-d input and weights")
    if x.shape[1] != weights.shape[1]:
        raise ShapeMismatch(
            f"input has {x.shape[1]} channels, weights expect {weights.shape[1]}"
        )
    b = x.shape[0]
    f, c, kernel, _ = weights.shape
    cols = _im2col(x, kernel, stride, padding)
    ho, wo = cols.shape[4], cols.shape[5]
    cols_r = cols.reshape(b, c * kernel * kernel, ho * wo)
    out = (weights.reshape(f, -1) @ cols_r).reshape(b, f, ho, wo)
    out += bias[None, :, None, None]
    cache = (cols_r, x.shape, weights, stride, padding)
    return out, cache


def conv2d_backward(grad_out, cache):
    cols_r, x_shape, weights, stride, padding = cache
    b = x_shape[0]
    f, c, kernel, _ = weights.shape
    ho_wo = grad_out.shape[2] * grad_out.shape[3]
    g = grad_out.reshape(b, f, ho_wo)
    grad_w = np.matmul(g, cols_r.transpose(0, 2, 1)).sum(axis=0).reshape(weights.shape)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    grad_cols = (weights.reshape(f, -1).T @ g).reshape(
        b, c, kernel, kernel, grad_out.shape[2], grad_out.shape[3]
    )
    grad_x = _col2im(grad_cols, x_shape, kernel, stride, padding)
    return grad_x, grad_w, grad_b


# ----------------------------------------------------------------------
# pointwise and pooling

def relu_forward(x):
    return np.maximum(x, 0.0), x > 0


def relu_backward(grad_out, cache):
    return grad_out * cache


def maxpool_forward(x, size: int):
    """Non-overlapping size x size max pooling; trailing remainder rows and
    columns are cropped."""
    b, c, h, w = x.shape
    ho, wo = h // size, w // size
    if ho < 1 or wo < 1:
        raise ShapeMismatch(f"pool size {size} exceeds input {h}x{w}")
    x = x[:, :, : ho * size, : wo * size]
    windows = (
        x.reshape(b, c, ho, size, wo, size)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, ho, wo, size * size)
    )
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    cache = (idx, (b, c, h, w), size)
    return out, cache


def maxpool_backward(grad_out, cache):
    idx, x_shape, size = cache
    b, c, h, w = x_shape
    ho, wo = h // size, w // size
    grad_windows = np.zeros((b, c, ho, wo, size * size), dtype=grad_out.dtype)
    np.put_along_axis(grad_windows, idx[..., None], grad_out[..., None], axis=-1)
    grad_x = np.zeros(x_shape, dtype=grad_out.dtype)
    grad_x[:, :, : ho * size, : wo * size] = (
        grad_windows.reshape(b, c, ho, wo, size, size)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, ho * size, wo * size)
    )
    return grad_x


# ----------------------------------------------------------------------
# batch normalization (per channel over batch and space)

def batchnorm_forward(x, gamma, beta, running_mean, running_var, momentum=0.9, eps=1e-5, train=True):
    """Returns (out, cache, new_running_mean, new_running_var).

    Training normalizes with batch statistics and updates the running
    estimates; evaluation uses the running estimates unchanged.
    """
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        new_mean = momentum * running_mean + (1.0 - momentum) * mean
        new_var = momentum * running_var + (1.0 - momentum) * var
    else:
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma[None, :, None, None] * x_hat + beta[None, :, None, None]
    cache = (x_hat, gamma, inv_std, train)
    return out, cache, new_mean, new_var


def batchnorm_backward(grad_out, cache):
    x_hat, gamma, inv_std, train = cache
    grad_gamma = (grad_out * x_hat).sum(axis=(0, 2, 3))
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    g = grad_out * gamma[None, :, None, None]
    if not train:
        return g * inv_std[None, :, None, None], grad_gamma, grad_beta
    mean_g = g.mean(axis=(0, 2, 3))[None, :, None, None]
    mean_gx = (g * x_hat).mean(axis=(0, 2, 3))[None, :, None, None]
    grad_x = inv_std[None, :, None, None] * (g - mean_g - x_hat * mean_gx)
    return grad_x, grad_gamma, grad_beta


# ----------------------------------------------------------------------
# dropout

def dropout_forward(x, rate: float, rng: np.random.Generator, train=True):
    """Inverted dropout; identity when rate == 0 or train is False."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(grad_out, mask):
    return grad_out if mask is None else grad_out * mask


# ----------------------------------------------------------------------
# dense and loss

def dense_forward(x, weights, bias):
    """x (B, D) @ weights (D, O) + bias (O,)."""
    if x.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeMismatch(f"dense expects ({x.shape[0]}, {weights.shape[0]}), got {x.shape}")
    return x @ weights + bias, (x, weights)


def dense_backward(grad_out, cache):
    x, weights = cache
    return grad_out @ weights.T, x.T @ grad_out, grad_out.sum(axis=0)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch; returns (loss, grad_logits)."""
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ShapeMismatch(f"logits {logits.shape} do not match labels {labels.shape}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    b = logits.shape[0]
    loss = -float(log_probs[np.arange(b), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(b), labels] -= 1.0
    return loss, grad / b
