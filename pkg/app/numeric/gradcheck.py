"""
Central finite-difference gradient checking.
"""

from typing import Callable, Optional

import numpy as np

from app.numeric.tensor import Tape, Tensor

CHECKED = "x"


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Central-difference estimate of the gradient of a scalar array function."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        upper = float(f(x))
        flat[i] = original - eps
        lower = float(f(x))
        flat[i] = original
        out[i] = (upper - lower) / (2.0 * eps)
    return grad


def relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a - n| / max(1, |a|, |n|) elementwise."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return np.abs(analytic - numeric) / scale


def tape_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray) -> np.ndarray:
    """Reverse-mode gradient of ``f`` at ``x``."""
    tape = Tape()
    root = f(tape.watch(x, CHECKED))
    return tape.backward(root)[CHECKED]


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: np.ndarray,
    eps: float = 1e-4,
    exclude: Optional[np.ndarray] = None,
) -> float:
    """
    Compare the tape gradient of ``f`` against central differences.

    Args:
        f: function mapping a Tensor shaped like ``x`` to a scalar Tensor
        x: evaluation point
        eps: perturbation size
        exclude: boolean mask of coordinates to ignore (e.g. ReLU kinks)

    Returns:
        Maximum relative error over the checked coordinates
    """
    x = np.asarray(x, dtype=np.float64)
    analytic = tape_gradient(f, x)
    numeric = numeric_gradient(lambda v: f(Tensor(v)).item(), x, eps)
    errors = relative_errors(analytic, numeric)
    if exclude is not None:
        errors = errors[~np.asarray(exclude, dtype=bool)]
    return float(errors.max()) if errors.size else 0.0
