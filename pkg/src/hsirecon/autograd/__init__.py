"""Small reverse-mode autodiff engine on numpy arrays."""

from . import ops
from .gradcheck import grad_check, nudge_from_zero
from .io import load_params, save_params
from .ops import count_macs
from .tensor import Tensor, as_tensor, no_grad, set_debug

__all__ = [
    "Tensor",
    "as_tensor",
    "count_macs",
    "grad_check",
    "load_params",
    "no_grad",
    "nudge_from_zero",
    "ops",
    "save_params",
    "set_debug",
]
