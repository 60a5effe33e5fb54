from .gradcheck import grad_check, grad_errors, relative_error
from .ops import (
    concat_channels,
    conv3d,
    dropout,
    maxpool3d,
    relu,
    sigmoid,
    take_channels,
    upsample3d_nearest,
    vector_norm,
)
from .optim import AdamState, adam_step
from .tensor import Tensor, add, as_tensor, divide, multiply, square, sub, tensor_sum

__all__ = [
    "AdamState", "Tensor", "adam_step", "add", "as_tensor", "concat_channels", "conv3d",
    "divide", "dropout", "grad_check", "grad_errors", "maxpool3d", "multiply", "relative_error",
    "relu", "sigmoid", "square", "sub", "take_channels", "tensor_sum", "upsample3d_nearest",
    "vector_norm",
]
