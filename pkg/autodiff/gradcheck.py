from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from autodiff.tensor import Tensor


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the scalar fn() with respect to tensor.data"""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = fn().item()
        flat[i] = original - h
        minus = fn().item()
        flat[i] = original
        flat_grad[i] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor],
                    h: float = 1e-5) -> Dict[int, float]:
    """
    Compare backward() gradients of fn() against finite differences.

    Returns the relative error per tensor index. fn must rebuild the graph on
    every call so the perturbed data is picked up.
    """
    for t in tensors:
        t.zero_grad()
    fn().backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    return {
        i: relative_error(analytic[i], numerical_gradient(fn, t, h))
        for i, t in enumerate(tensors)
    }


def op_suite(seed: int = 0) -> Dict[str, Tuple[Callable[[], Tensor], List[Tensor]]]:
    """Small random graphs, one per differentiable op: name -> (scalar loss fn, inputs)"""
    from autodiff import functional as F

    rng = np.random.default_rng(seed)

    def param(*shape):
        return Tensor(rng.standard_normal(shape), requires_grad=True)

    x4 = param(3, 2, 5, 4)
    kernels = param(3, 2, 3, 3)
    bias = param(3)
    wide = param(2, 2, 1, 3)
    target4 = rng.standard_normal((3, 3, 5, 4))
    x2, weight, fc_bias = param(4, 6), param(3, 6), param(3)
    gamma, beta = param(2), param(2)
    bn_target = rng.standard_normal((3, 2, 5, 4))
    # Keep leaky ReLU inputs away from the kink
    away = rng.uniform(0.1, 1.0, (4, 5)) * rng.choice([-1.0, 1.0], (4, 5))
    leaky_in = Tensor(away, requires_grad=True)
    pred, target = param(4, 5), param(4, 5)

    return {
        "conv2d": (lambda: F.mse_loss(F.conv2d(x4, kernels, bias), target4), [x4, kernels, bias]),
        "conv2d_row": (lambda: F.tensor_sum(F.tanh(F.conv2d(x4, wide, padding="same"))), [x4, wide]),
        "affine": (lambda: F.tensor_sum(F.tanh(F.affine(x2, weight, fc_bias))), [x2, weight, fc_bias]),
        "batch_norm": (lambda: F.mse_loss(F.batch_norm(x4, gamma, beta, np.zeros(2), np.ones(2), training=True),
                                          bn_target), [x4, gamma, beta]),
        "tanh": (lambda: F.tensor_sum(F.tanh(x2)), [x2]),
        "leaky_relu": (lambda: F.mse_loss(F.leaky_relu(leaky_in), target.data), [leaky_in]),
        "reshape_add": (lambda: F.tensor_sum(F.tanh(F.add(F.reshape(x2, (6, 4)), F.reshape(x2, (6, 4))))), [x2]),
        "mse_loss": (lambda: F.mse_loss(pred, target), [pred, target]),
    }


def run_suite(seed: int = 0, h: float = 1e-5) -> Dict[str, float]:
    """Worst relative gradient error per op"""
    return {name: max(check_gradients(fn, tensors, h).values())
            for name, (fn, tensors) in op_suite(seed).items()}
