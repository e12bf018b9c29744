"""
Differentiable ops used by the CSI codecs.

All convolutions are stride 1 cross-correlations. Kernels must have odd
extents; 'same' padding keeps the spatial size, 'valid' shrinks it.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from autodiff.tensor import Tensor, as_tensor, record
from utils.errors import ContractViolation

TensorLike = Union[Tensor, np.ndarray, float]


def _same_padding(kernel_shape: Tuple[int, int], padding: str) -> Tuple[int, int]:
    kh, kw = kernel_shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractViolation(f"kernel extents must be odd, got {kh}x{kw}")
    if padding == "same":
        return kh // 2, kw // 2
    if padding == "valid":
        return 0, 0
    raise ContractViolation(f"unknown padding mode {padding!r}")


def conv2d(x: TensorLike, kernels: Tensor, bias: Optional[Tensor] = None,
           padding: str = "same") -> Tensor:
    x, kernels = as_tensor(x), as_tensor(kernels)
    if x.ndim != 4 or kernels.ndim != 4:
        raise ContractViolation(f"conv2d expects 4-d input and kernels, got {x.shape} and {kernels.shape}")
    n, cin, h, w = x.shape
    cout, kcin, kh, kw = kernels.shape
    if cin != kcin:
        raise ContractViolation(f"input has {cin} channels but kernels expect {kcin}")
    if bias is not None and bias.shape != (cout,):
        raise ContractViolation(f"bias shape {bias.shape} != ({cout},)")
    ph, pw = _same_padding((kh, kw), padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    oh, ow = h + 2 * ph - kh + 1, w + 2 * pw - kw + 1
    if oh < 1 or ow < 1:
        raise ContractViolation("kernel larger than padded input")

    # Shift-and-accumulate over kernel taps keeps memory at one feature map per tap
    out = np.zeros((cout, n, oh, ow))
    for i in range(kh):
        for j in range(kw):
            window = xp[:, :, i:i + oh, j:j + ow]
            out += np.tensordot(kernels.data[:, :, i, j], window, axes=([1], [1]))
    out = out.transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def backward(grad):
        grad_xp = np.zeros_like(xp) if x.requires_grad else None
        grad_k = np.zeros_like(kernels.data) if kernels.requires_grad else None
        for i in range(kh):
            for j in range(kw):
                window = xp[:, :, i:i + oh, j:j + ow]
                if grad_k is not None:
                    grad_k[:, :, i, j] = np.tensordot(grad, window, axes=([0, 2, 3], [0, 2, 3]))
                if grad_xp is not None:
                    contrib = np.tensordot(grad, kernels.data[:, :, i, j], axes=([1], [0]))
                    grad_xp[:, :, i:i + oh, j:j + ow] += contrib.transpose(0, 3, 1, 2)
        grad_x = grad_xp[:, :, ph:ph + h, pw:pw + w] if grad_xp is not None else None
        grad_b = grad.sum(axis=(0, 2, 3)) if bias is not None else None
        return grad_x, grad_k, grad_b

    inputs = (x, kernels) if bias is None else (x, kernels, bias)
    return record("conv2d", inputs, out, backward)


def affine(x: TensorLike, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2:
        raise ContractViolation(f"affine expects 2-d input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ContractViolation(f"input width {x.shape[1]} != weight fan-in {weight.shape[1]}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ContractViolation(f"bias shape {bias.shape} != ({weight.shape[0]},)")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward(grad):
        return grad @ weight.data, grad.T @ x.data, (grad.sum(axis=0) if bias is not None else None)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("affine", inputs, out, backward)


def batch_norm(x: TensorLike, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.9,
               eps: float = 1e-5) -> Tensor:
    """
    Per-channel normalization over (N, H, W) for 4-d input or N for 2-d input.

    In training mode the batch statistics normalize the input and the running
    statistics are updated in place: running = momentum * running + (1 - momentum) * batch.
    """
    x = as_tensor(x)
    if x.ndim not in (2, 4):
        raise ContractViolation(f"batch_norm expects 2-d or 4-d input, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ContractViolation(f"gamma/beta must have shape ({c},)")
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    bshape = (1, c) if x.ndim == 2 else (1, c, 1, 1)

    if training:
        if x.shape[0] < 2:
            raise ContractViolation("batch_norm in train mode needs at least 2 samples")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean, var = running_mean, running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mean.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.data.reshape(bshape) * x_hat + beta.data.reshape(bshape)
    count = x.data.size // c

    def backward(grad):
        grad_gamma = (grad * x_hat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        d_xhat = grad * gamma.data.reshape(bshape)
        if training:
            grad_x = (inv_std.reshape(bshape) / count) * (
                count * d_xhat
                - d_xhat.sum(axis=axes).reshape(bshape)
                - x_hat * (d_xhat * x_hat).sum(axis=axes).reshape(bshape)
            )
        else:
            grad_x = d_xhat * inv_std.reshape(bshape)
        return grad_x, grad_gamma, grad_beta

    return record("batch_norm", (x, gamma, beta), out, backward)


def tanh(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return record("tanh", (x,), out, lambda grad: (grad * (1.0 - out ** 2),))


def leaky_relu(x: TensorLike, slope: float = 0.3) -> Tensor:
    x = as_tensor(x)
    positive = x.data > 0
    out = np.where(positive, x.data, slope * x.data)
    return record("leaky_relu", (x,), out, lambda grad: (np.where(positive, grad, slope * grad),))


def reshape(x: TensorLike, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    original = x.shape
    out = x.data.reshape(tuple(shape))
    return record("reshape", (x,), out, lambda grad: (grad.reshape(original),))


def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ContractViolation(f"add expects equal shapes, got {a.shape} and {b.shape}")
    return record("add", (a, b), a.data + b.data, lambda grad: (grad, grad))


def tensor_sum(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return record("sum", (x,), np.array(x.data.sum()), lambda grad: (np.full(shape, float(grad)),))


def mse_loss(pred: TensorLike, target: TensorLike) -> Tensor:
    """(1/N) * sum over the batch of squared Frobenius errors per sample"""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ContractViolation(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    n = pred.shape[0] if pred.ndim > 0 else 1
    diff = pred.data - target.data
    out = np.array(np.sum(diff ** 2) / n)

    def backward(grad):
        g = 2.0 * float(grad) * diff / n
        return g, -g

    return record("mse_loss", (pred, target), out, backward)
