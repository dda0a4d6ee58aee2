"""Minimal reverse-mode autodiff over float64 numpy arrays."""
from .core import (
    BCE_EPS,
    DomainError,
    ShapeError,
    Tape,
    Tensor,
    TensorUsageError,
    add,
    as_tensor,
    backward,
    bce,
    concat,
    exp,
    gelu,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mse,
    mul,
    numerical_grad,
    relative_error,
    reshape,
    sigmoid,
    softmax,
    sub,
    sum_,
    take,
    tanh,
    transpose,
)
from .optim import Adam, AdamState, PoisonedUpdateError, adam_step, clip_gradients, global_norm

__all__ = [name for name in dir() if not name.startswith("_")]
