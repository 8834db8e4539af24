"""Minimal reverse-mode autodiff over dense numpy arrays."""
from .tensor import Tensor, ShapeError, backward, no_grad, is_grad_enabled, as_tensor
from . import ops, nn
from .optim import Adam, AdamState, adam_step, clip_grad_norm

__all__ = [
    "Tensor", "ShapeError", "backward", "no_grad", "is_grad_enabled", "as_tensor",
    "ops", "nn", "Adam", "AdamState", "adam_step", "clip_grad_norm",
]
