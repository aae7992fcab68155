"""Central finite-difference oracle for checking reverse-mode gradients."""
from typing import Callable

import numpy as np

from app.config.constants import GRADCHECK_STEP
from app.core.tensor import Tensor


def numerical_gradient(fn: Callable[[], Tensor], param: Tensor, step: float = GRADCHECK_STEP) -> np.ndarray:
    """Central differences of the scalar ``fn()`` with respect to ``param``."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = fn().item()
        flat[i] = original - step
        minus = fn().item()
        flat[i] = original
        grad.reshape(-1)[i] = (plus - minus) / (2.0 * step)
    return grad


def analytic_gradient(fn: Callable[[], Tensor], param: Tensor) -> np.ndarray:
    param.grad = None
    fn().backward()
    grad = np.zeros_like(param.data) if param.grad is None else param.grad.copy()
    param.grad = None
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.max([np.max(np.abs(a)), np.max(np.abs(b)), 1e-8])
    return float(np.max(np.abs(a - b)) / scale)
