"""
Layer objects: parameter ownership, shape inference and multiply-accumulate
counts on top of the functional ops.
"""

from typing import ClassVar, List, Sequence, Tuple

import numpy as np

from autodiff import functional as F
from autodiff.tensor import Tensor
from utils.errors import ContractViolation

Shape = Tuple[int, ...]


def glorot_uniform(rng: np.random.Generator, shape: Shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind: ClassVar[str] = "layer"
    tag: ClassVar[int] = 0

    def __init__(self, role: str = "trunk"):
        # 'trunk' or 'head'; cost accounting reports the two separately
        self.role = role

    def forward(self, x: Tensor, training: bool) -> Tensor:
        raise NotImplementedError

    def parameters(self) -> List[Tensor]:
        return []

    def buffers(self) -> List[np.ndarray]:
        return []

    def arrays(self) -> List[np.ndarray]:
        """Everything a checkpoint stores for this layer, in a fixed order"""
        return [p.data for p in self.parameters()] + self.buffers()

    def load_arrays(self, arrays: Sequence[np.ndarray]):
        own = self.arrays()
        if len(own) != len(arrays):
            raise ContractViolation(f"{self.kind}: expected {len(own)} arrays, got {len(arrays)}")
        for target, source in zip(own, arrays):
            if target.shape != source.shape:
                raise ContractViolation(f"{self.kind}: shape {source.shape} != {target.shape}")
            target[...] = source

    def output_shape(self, in_shape: Shape) -> Shape:
        return in_shape

    def macs(self, in_shape: Shape) -> int:
        return 0

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))


class Conv2d(Layer):
    kind = "conv2d"
    tag = 1

    def __init__(self, in_channels: int, out_channels: int, kernel_size: Tuple[int, int],
                 rng: np.random.Generator, bias: bool = True, role: str = "trunk"):
        super().__init__(role)
        kh, kw = kernel_size
        fan_in, fan_out = in_channels * kh * kw, out_channels * kh * kw
        self.weight = Tensor(glorot_uniform(rng, (out_channels, in_channels, kh, kw), fan_in, fan_out),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True) if bias else None

    def forward(self, x, training):
        return F.conv2d(x, self.weight, self.bias, padding="same")

    def parameters(self):
        return [self.weight] if self.bias is None else [self.weight, self.bias]

    def output_shape(self, in_shape):
        cout = self.weight.shape[0]
        return (cout,) + tuple(in_shape[1:])

    def macs(self, in_shape):
        cout, cin, kh, kw = self.weight.shape
        return int(np.prod(in_shape[1:])) * cout * cin * kh * kw


class Affine(Layer):
    kind = "affine"
    tag = 2

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True, role: str = "head"):
        super().__init__(role)
        self.weight = Tensor(glorot_uniform(rng, (out_features, in_features), in_features, out_features),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_features), requires_grad=True) if bias else None

    def forward(self, x, training):
        return F.affine(x, self.weight, self.bias)

    def parameters(self):
        return [self.weight] if self.bias is None else [self.weight, self.bias]

    def output_shape(self, in_shape):
        return (self.weight.shape[0],)

    def macs(self, in_shape):
        return int(self.weight.size)


class BatchNorm(Layer):
    kind = "batch_norm"
    tag = 3

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5, role: str = "trunk"):
        super().__init__(role)
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x, training):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            training=training, momentum=self.momentum, eps=self.eps)

    def parameters(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [self.running_mean, self.running_var]


class Activation(Layer):
    kind = "activation"
    tag = 4

    def __init__(self, name: str, slope: float = 0.3, role: str = "trunk"):
        super().__init__(role)
        if name not in ("tanh", "leaky_relu"):
            raise ContractViolation(f"unknown activation {name!r}")
        self.name = name
        self.slope = slope

    def forward(self, x, training):
        if self.name == "tanh":
            return F.tanh(x)
        return F.leaky_relu(x, self.slope)


class Reshape(Layer):
    kind = "reshape"
    tag = 5

    def __init__(self, shape: Sequence[int], role: str = "trunk"):
        super().__init__(role)
        # Per-sample shape; the batch axis is kept
        self.shape = tuple(shape)

    def forward(self, x, training):
        return F.reshape(x, (x.shape[0],) + self.shape)

    def output_shape(self, in_shape):
        if int(np.prod(in_shape)) != int(np.prod(self.shape)):
            raise ContractViolation(f"cannot reshape {in_shape} to {self.shape}")
        return self.shape


def run_layers(layers: Sequence[Layer], x: Tensor, training: bool) -> Tensor:
    for layer in layers:
        x = layer.forward(x, training)
    return x
