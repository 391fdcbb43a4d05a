"""Pure forward/backward kernels for every primitive the supernet uses.

All kernels preserve the dtype of their inputs and never mutate them, with one
exception: `batchnorm` in train mode updates the running statistics it is given.
Contractions go through `np.einsum(..., optimize=False)` so the accumulation
order is fixed.
"""

from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from scarlet_kit.engine.tensor import check_rank4
from scarlet_kit.errors import DimensionError, InputError, StatisticsError

BN_MOMENTUM = 0.1
BN_EPS = 1e-5
ACTIVATIONS = ("relu", "relu6", "sigmoid")


# --------------------------------------------------------------------------- conv

def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _check_conv(x: np.ndarray, weight: np.ndarray, stride: int, padding: int, groups: int):
    check_rank4(x, "conv2d input")
    if weight.ndim != 4:
        raise DimensionError(f"conv2d weight must be (out_c, in_c/groups, k, k), got shape {weight.shape}")
    out_c, in_per_group, k, k2 = weight.shape
    if k != k2:
        raise DimensionError(f"conv2d weight axes 2 and 3 must match (square kernel), got {k}x{k2}")
    if groups < 1 or out_c % groups:
        raise DimensionError(f"conv2d weight axis 0 (out_c={out_c}) is not divisible by groups={groups}")
    if x.shape[1] != in_per_group * groups:
        raise DimensionError(
            f"conv2d input axis 1 (channels={x.shape[1]}) != weight axis 1 (in_c/groups={in_per_group}) x groups={groups}"
        )
    if stride < 1 or padding < 0:
        raise InputError(f"conv2d needs stride >= 1 and padding >= 0, got stride={stride} padding={padding}")
    if x.shape[2] + 2 * padding < k or x.shape[3] + 2 * padding < k:
        raise DimensionError(
            f"conv2d input axes 2/3 ({x.shape[2]}x{x.shape[3]}) with padding {padding} are smaller than kernel {k}"
        )


def _windows(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d(x: np.ndarray, weight: np.ndarray, stride: int = 1, padding: int = 0, groups: int = 1) -> np.ndarray:
    """Grouped 2-D cross-correlation with zero padding and no bias."""
    _check_conv(x, weight, stride, padding, groups)
    n = x.shape[0]
    out_c, in_per_group, k, _ = weight.shape
    win = _windows(x, k, stride, padding)
    oh, ow = win.shape[2], win.shape[3]
    win = win.reshape(n, groups, in_per_group, oh, ow, k, k)
    w = weight.reshape(groups, out_c // groups, in_per_group, k, k)
    out = np.einsum("ngchwij,gocij->ngohw", win, w, optimize=False)
    return np.ascontiguousarray(out.reshape(n, out_c, oh, ow))


def conv2d_backward(
    grad_out: np.ndarray, x: np.ndarray, weight: np.ndarray, stride: int = 1, padding: int = 0, groups: int = 1
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of `conv2d` with respect to its input and weight."""
    n, c, h, w_in = x.shape
    out_c, in_per_group, k, _ = weight.shape
    oh, ow = grad_out.shape[2], grad_out.shape[3]
    win = _windows(x, k, stride, padding).reshape(n, groups, in_per_group, oh, ow, k, k)
    g = grad_out.reshape(n, groups, out_c // groups, oh, ow)
    w = weight.reshape(groups, out_c // groups, in_per_group, k, k)

    grad_w = np.einsum("ngchwij,ngohw->gocij", win, g, optimize=False).reshape(weight.shape)
    grad_win = np.einsum("ngohw,gocij->ngchwij", g, w, optimize=False).reshape(n, c, oh, ow, k, k)

    grad_padded = np.zeros((n, c, h + 2 * padding, w_in + 2 * padding), dtype=grad_out.dtype)
    for i in range(k):
        for j in range(k):
            grad_padded[:, :, i:i + stride * (oh - 1) + 1:stride, j:j + stride * (ow - 1) + 1:stride] += grad_win[..., i, j]
    grad_x = grad_padded[:, :, padding:padding + h, padding:padding + w_in]
    return np.ascontiguousarray(grad_x), grad_w


# --------------------------------------------------------------------- batchnorm

def batchnorm(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str = "train",
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
):
    """Per-channel batch normalization.

    Returns (output, cache). Train mode normalizes over (n, h, w) and folds the
    batch statistics into the running buffers in place; eval mode is the affine
    map given by the running statistics.
    """
    check_rank4(x, "batchnorm input")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batchnorm gamma/beta must have length {c} (input axis 1), got {gamma.shape}/{beta.shape}")
    if mode == "train":
        if x.shape[0] < 2:
            raise StatisticsError(f"batchnorm in train mode needs a batch of at least 2, got {x.shape[0]}")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        count = x.shape[0] * x.shape[2] * x.shape[3]
        running_mean[...] = (1 - momentum) * running_mean + momentum * mean
        running_var[...] = (1 - momentum) * running_var + momentum * var * (count / max(count - 1, 1))
    elif mode == "eval":
        mean, var = running_mean, running_var
    else:
        raise InputError(f"batchnorm mode must be 'train' or 'eval', got {mode!r}")
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    x_hat = (x - mean.astype(x.dtype)[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma[None, :, None, None] * x_hat + beta[None, :, None, None]
    return out, (x_hat, inv_std, mode)


def batchnorm_backward(grad_out: np.ndarray, gamma: np.ndarray, cache):
    """Returns (grad_x, grad_gamma, grad_beta)."""
    x_hat, inv_std, mode = cache
    axes = (0, 2, 3)
    grad_gamma = (grad_out * x_hat).sum(axis=axes)
    grad_beta = grad_out.sum(axis=axes)
    grad_x_hat = grad_out * gamma[None, :, None, None]
    if mode == "eval":
        return grad_x_hat * inv_std[None, :, None, None], grad_gamma, grad_beta
    count = grad_out.shape[0] * grad_out.shape[2] * grad_out.shape[3]
    grad_x = (inv_std[None, :, None, None] / count) * (
        count * grad_x_hat
        - grad_x_hat.sum(axis=axes)[None, :, None, None]
        - x_hat * (grad_x_hat * x_hat).sum(axis=axes)[None, :, None, None]
    )
    return grad_x.astype(grad_out.dtype), grad_gamma, grad_beta


# -------------------------------------------------------------------- activations

def activation(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "relu6":
        return np.clip(x, 0, 6)
    if kind == "sigmoid":
        return expit(x)
    raise InputError(f"unknown activation {kind!r}, expected one of {ACTIVATIONS}")


def activation_backward(grad_out: np.ndarray, x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return grad_out * (x > 0)
    if kind == "relu6":
        return grad_out * ((x > 0) & (x < 6))
    if kind == "sigmoid":
        s = expit(x)
        return grad_out * s * (1 - s)
    raise InputError(f"unknown activation {kind!r}, expected one of {ACTIVATIONS}")


# ----------------------------------------------------------- squeeze-excitation

def squeeze_excite(x: np.ndarray, w_reduce: np.ndarray, w_expand: np.ndarray):
    """Global pool -> 1x1 reduce -> relu -> 1x1 expand -> sigmoid -> channel scale."""
    check_rank4(x, "squeeze-excite input")
    pooled = x.mean(axis=(2, 3))
    z = pooled @ w_reduce[:, :, 0, 0].T
    a = np.maximum(z, 0)
    s = expit(a @ w_expand[:, :, 0, 0].T)
    return x * s[:, :, None, None], (x, pooled, z, a, s)


def squeeze_excite_backward(grad_out: np.ndarray, w_reduce: np.ndarray, w_expand: np.ndarray, cache):
    """Returns (grad_x, grad_w_reduce, grad_w_expand)."""
    x, pooled, z, a, s = cache
    h, w = x.shape[2], x.shape[3]
    grad_x = grad_out * s[:, :, None, None]
    grad_e = (grad_out * x).sum(axis=(2, 3)) * s * (1 - s)
    grad_w_expand = (grad_e.T @ a)[:, :, None, None]
    grad_z = (grad_e @ w_expand[:, :, 0, 0]) * (z > 0)
    grad_w_reduce = (grad_z.T @ pooled)[:, :, None, None]
    grad_pooled = grad_z @ w_reduce[:, :, 0, 0]
    grad_x = grad_x + grad_pooled[:, :, None, None] / (h * w)
    return grad_x, grad_w_reduce, grad_w_expand


# ---------------------------------------------------------------- classifier head

def classifier_head(x: np.ndarray, fc_weight: np.ndarray, fc_bias: np.ndarray, labels=None):
    """Global average pool + linear + mean softmax cross-entropy.

    Returns (logits, loss, cache); loss is None when no labels are given.
    """
    check_rank4(x, "classifier input")
    classes, features = fc_weight.shape
    if x.shape[1] != features:
        raise DimensionError(f"classifier input axis 1 ({x.shape[1]}) != fc weight axis 1 ({features})")
    pooled = x.mean(axis=(2, 3))
    logits = pooled @ fc_weight.T + fc_bias
    if labels is None:
        return logits, None, (x.shape, pooled, None, None)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (x.shape[0],):
        raise InputError(f"expected {x.shape[0]} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise InputError(f"labels must lie in [0, {classes}), got range [{labels.min()}, {labels.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(labels.size)
    loss = float((log_norm - shifted[rows, labels]).mean())
    probs = np.exp(shifted - log_norm[:, None])
    return logits, loss, (x.shape, pooled, probs, labels)


def classifier_head_backward(upstream: float, fc_weight: np.ndarray, cache):
    """Returns (grad_x, grad_fc_weight, grad_fc_bias) for the mean cross-entropy."""
    x_shape, pooled, probs, labels = cache
    if probs is None:
        raise InputError("classifier backward needs a forward pass with labels")
    n, _, h, w = x_shape
    grad_logits = probs.copy()
    grad_logits[np.arange(n), labels] -= 1
    grad_logits *= upstream / n
    grad_logits = grad_logits.astype(pooled.dtype)
    grad_weight = grad_logits.T @ pooled
    grad_bias = grad_logits.sum(axis=0)
    grad_pooled = grad_logits @ fc_weight
    grad_x = np.broadcast_to(grad_pooled[:, :, None, None] / (h * w), x_shape).copy()
    return grad_x, grad_weight, grad_bias
