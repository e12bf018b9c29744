from autodiff.tensor import ComputationTape, Tensor
from autodiff.optim import AdamState, adam_step

__all__ = ["Tensor", "ComputationTape", "AdamState", "adam_step"]
