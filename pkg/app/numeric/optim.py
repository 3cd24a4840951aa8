"""
Adam optimizer with an explicit L2 penalty gradient.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np

from app.utils.exceptions import DimensionError


@dataclass
class AdamState:
    """Per-parameter first/second moments and the shared step counter."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    decay: Optional[Iterable[str]] = None,
) -> Dict[str, np.ndarray]:
    """
    One Adam update with bias correction.

    The L2 term adds ``2 * weight_decay * param`` to the gradient of every name in
    ``decay`` (all names when ``decay`` is None) before the moments are updated.

    Args:
        params: name -> parameter array (not modified)
        grads: name -> gradient of the data loss
        state: moments and step counter, updated in place
        lr: learning rate
        weight_decay: L2 coefficient
        decay: names the L2 term applies to

    Returns:
        New parameter dict
    """
    decay = set(params) if decay is None else set(decay)
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t

    updated = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if weight_decay and name in decay:
            g = g + 2.0 * weight_decay * p
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        m_hat = m / bc1
        v_hat = v / bc2
        updated[name] = p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated
