"""
Dense float64 tensors with tape-based reverse-mode differentiation.

Only the primitives the geolocation model needs are provided. Operations on
tensors that belong to no tape compute values only, so inference runs without
recording anything.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.utils.exceptions import (
    BatchSizeError, ContractError, DimensionError, NonFiniteError, UnknownMethodError,
)

ArrayLike = Union[np.ndarray, Sequence, float]
Vjp = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """An immutable float64 value, optionally tracked by a :class:`Tape`."""

    __slots__ = ("value", "tape", "index")

    def __init__(self, value: ArrayLike, tape: Optional["Tape"] = None, index: int = -1):
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError("tensor holds non-finite values", {"shape": list(value.shape)})
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, tracked={self.tracked})"


@dataclass
class _Node:
    inputs: Tuple[Tensor, ...]
    vjp: Optional[Vjp]
    name: Optional[str] = None


class Tape:
    """Records operations in execution order, which is a topological order of the DAG."""

    def __init__(self):
        self.nodes: List[_Node] = []
        self.leaves: Dict[str, int] = {}
        self.leaf_shapes: Dict[str, Tuple[int, ...]] = {}

    def watch(self, value: ArrayLike, name: str) -> Tensor:
        """Register a parameter whose gradient :meth:`backward` reports under ``name``."""
        if name in self.leaves:
            raise ContractError(f"parameter {name} already watched on this tape")
        tensor = Tensor(value, self, len(self.nodes))
        self.nodes.append(_Node((), None, name))
        self.leaves[name] = tensor.index
        self.leaf_shapes[name] = tensor.shape
        return tensor

    def record(self, value: np.ndarray, inputs: Sequence[Tensor], vjp: Vjp) -> Tensor:
        tensor = Tensor(value, self, len(self.nodes))
        self.nodes.append(_Node(tuple(inputs), vjp))
        return tensor

    def backward(self, root: Tensor) -> Dict[str, np.ndarray]:
        """
        Reverse-mode pass from a scalar root.

        Returns:
            Gradient per watched parameter name; parameters the root does not depend on get zeros
        """
        if root.tape is not self:
            raise ContractError("backward root was not recorded on this tape")
        if root.value.size != 1:
            raise ContractError(f"backward root must be a scalar, got shape {root.shape}")

        grads: Dict[int, np.ndarray] = {root.index: np.ones_like(root.value)}
        for index in range(root.index, -1, -1):
            node = self.nodes[index]
            grad = grads.get(index)
            if grad is None or node.vjp is None:
                continue
            for tensor, g in zip(node.inputs, node.vjp(grad)):
                if g is None or tensor.tape is not self:
                    continue
                if tensor.index in grads:
                    grads[tensor.index] = grads[tensor.index] + g
                else:
                    grads[tensor.index] = g

        return {
            name: grads[index] if index in grads else np.zeros(self.leaf_shapes[name])
            for name, index in self.leaves.items()
        }


def backward(tape: Tape, root: Tensor) -> Dict[str, np.ndarray]:
    return tape.backward(root)


def constant(value: ArrayLike) -> Tensor:
    return Tensor(value)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(value: np.ndarray, inputs: Sequence[Tensor], vjp: Vjp) -> Tensor:
    tape = next((t.tape for t in inputs if t.tape is not None), None)
    if tape is None:
        return Tensor(value)
    return tape.record(value, inputs, vjp)


def affine(x, W, b=None) -> Tensor:
    """y = xW + b with the bias broadcast over rows."""
    x, W = _as_tensor(x), _as_tensor(W)
    if x.value.ndim != 2 or W.value.ndim != 2 or x.shape[1] != W.shape[0]:
        raise DimensionError(f"affine: cannot multiply {x.shape} by {W.shape}")
    y = x.value @ W.value
    inputs = [x, W]
    if b is not None:
        b = _as_tensor(b)
        if b.shape != (W.shape[1],):
            raise DimensionError(f"affine: bias shape {b.shape} does not match {W.shape[1]} outputs")
        y = y + b.value
        inputs.append(b)

    def vjp(g):
        grads = [g @ W.value.T, x.value.T @ g]
        if b is not None:
            grads.append(g.sum(axis=0))
        return grads

    return _emit(y, inputs, vjp)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")
    return _emit(a.value + b.value, [a, b], lambda g: [g, g])


def relu(x) -> Tensor:
    """max(0, x); the subgradient at 0 is 0."""
    x = _as_tensor(x)
    mask = x.value > 0
    return _emit(np.where(mask, x.value, 0.0), [x], lambda g: [g * mask])


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    s = _stable_sigmoid(x.value)
    return _emit(s, [x], lambda g: [g * s * (1.0 - s)])


@dataclass
class BatchNormState:
    """Per-dimension affine parameters and running statistics of a batch-norm layer."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5
    training: bool = True

    @classmethod
    def fresh(cls, dim: int, momentum: float = 0.1, eps: float = 1e-5) -> "BatchNormState":
        return cls(
            gamma=np.ones(dim), beta=np.zeros(dim),
            running_mean=np.zeros(dim), running_var=np.ones(dim),
            momentum=momentum, eps=eps,
        )

    def copy(self) -> "BatchNormState":
        return BatchNormState(
            self.gamma.copy(), self.beta.copy(), self.running_mean.copy(), self.running_var.copy(),
            self.momentum, self.eps, self.training,
        )


def batch_norm(x, state: BatchNormState, gamma=None, beta=None, update_stats: bool = True) -> Tensor:
    """
    Batch normalization over rows.

    Train mode normalizes with the batch mean and biased variance and, when
    ``update_stats`` is set, folds the batch mean and unbiased variance into the
    running statistics. Eval mode uses the running statistics only.

    Args:
        x: n x d input
        state: running statistics, momentum, eps and mode
        gamma: scale tensor; defaults to ``state.gamma`` as a constant
        beta: shift tensor; defaults to ``state.beta`` as a constant
        update_stats: whether train mode updates the running statistics

    Returns:
        n x d normalized tensor
    """
    x = _as_tensor(x)
    gamma = _as_tensor(state.gamma if gamma is None else gamma)
    beta = _as_tensor(state.beta if beta is None else beta)
    if x.value.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise DimensionError(f"batch_norm: input {x.shape} with gamma {gamma.shape}, beta {beta.shape}")
    n = x.shape[0]

    if state.training:
        if n < 2:
            raise BatchSizeError(f"batch_norm in train mode needs at least 2 rows, got {n}")
        mean = x.value.mean(axis=0)
        var = x.value.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + state.eps)
        xhat = (x.value - mean) * inv_std
        if update_stats:
            m = state.momentum
            state.running_mean = (1.0 - m) * state.running_mean + m * mean
            state.running_var = (1.0 - m) * state.running_var + m * x.value.var(axis=0, ddof=1)

        def vjp(g):
            dxhat = g * gamma.value
            dx = (inv_std / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            return [dx, (g * xhat).sum(axis=0), g.sum(axis=0)]
    else:
        inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (x.value - state.running_mean) * inv_std

        def vjp(g):
            return [g * gamma.value * inv_std, (g * xhat).sum(axis=0), g.sum(axis=0)]

    return _emit(gamma.value * xhat + beta.value, [x, gamma, beta], vjp)


def mse_loss(pred, target) -> Tensor:
    """Sum of squared differences over all entries."""
    pred = _as_tensor(pred)
    target = np.asarray(target.value if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    diff = pred.value - target
    return _emit(np.array(np.sum(diff * diff)), [pred], lambda g: [2.0 * g * diff])


def sum_all(x) -> Tensor:
    x = _as_tensor(x)
    return _emit(np.array(np.sum(x.value)), [x], lambda g: [np.broadcast_to(g, x.shape).copy()])


def concat_columns(parts: Sequence) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1 or any(p.value.ndim != 2 for p in parts):
        raise DimensionError(f"concat_columns: shapes {[p.shape for p in parts]} do not share rows")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def vjp(g):
        return [g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts))]

    return _emit(np.hstack([p.value for p in parts]), parts, vjp)


def gather_rows(x, index: np.ndarray) -> Tensor:
    """Rows of ``x`` selected by ``index`` (repeats allowed)."""
    x = _as_tensor(x)
    index = np.asarray(index, dtype=np.int64)

    def vjp(g):
        out = np.zeros_like(x.value)
        np.add.at(out, index, g)
        return [out]

    return _emit(x.value[index], [x], vjp)


def reshape(x, shape: Tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    try:
        y = x.value.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"reshape: {e}")
    return _emit(y, [x], lambda g: [g.reshape(x.shape)])


def batched_matvec(W, h) -> Tensor:
    """out[m] = W[m] @ h[m] for a stack of square matrices."""
    W, h = _as_tensor(W), _as_tensor(h)
    if W.value.ndim != 3 or h.value.ndim != 2 or W.shape[0] != h.shape[0] or W.shape[2] != h.shape[1]:
        raise DimensionError(f"batched_matvec: matrices {W.shape} with vectors {h.shape}")
    y = np.einsum("mij,mj->mi", W.value, h.value)

    def vjp(g):
        return [g[:, :, None] * h.value[:, None, :], np.einsum("mij,mi->mj", W.value, g)]

    return _emit(y, [W, h], vjp)


def segment_aggregate(messages, segments: np.ndarray, n_segments: int, method: str) -> Tensor:
    """
    Reduce message rows per receiving segment.

    Rows are combined in their given order; an empty segment yields a zero row.
    For ``max`` the gradient goes to the first maximal row per column.

    Args:
        messages: m x d message rows
        segments: receiver id per row
        n_segments: number of receivers
        method: mean, sum or max

    Returns:
        n_segments x d tensor
    """
    messages = _as_tensor(messages)
    segments = np.asarray(segments, dtype=np.int64)
    m, d = messages.shape if messages.value.ndim == 2 else (0, 0)
    if messages.value.ndim != 2 or segments.shape != (m,):
        raise DimensionError(f"segment_aggregate: messages {messages.shape} with segments {segments.shape}")

    if method in ("sum", "mean"):
        out = np.zeros((n_segments, d))
        np.add.at(out, segments, messages.value)
        counts = np.bincount(segments, minlength=n_segments).astype(np.float64)
        if method == "mean":
            scale = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)
            out = out * scale[:, None]
        else:
            scale = np.ones(n_segments)

        def vjp(g):
            return [g[segments] * scale[segments][:, None]]

    elif method == "max":
        out = np.zeros((n_segments, d))
        winner = np.full((n_segments, d), -1, dtype=np.int64)
        order = np.argsort(segments, kind="stable")
        ordered = segments[order]
        starts = np.flatnonzero(np.r_[True, ordered[1:] != ordered[:-1]]) if m else np.array([], dtype=np.int64)
        ends = np.r_[starts[1:], m] if m else starts
        for s, e in zip(starts, ends):
            rows = order[s:e]
            block = messages.value[rows]
            seg = ordered[s]
            first = block.argmax(axis=0)
            out[seg] = block[first, np.arange(d)]
            winner[seg] = rows[first]

        def vjp(g):
            dm = np.zeros_like(messages.value)
            has = winner >= 0
            seg_ids, cols = np.nonzero(has)
            np.add.at(dm, (winner[seg_ids, cols], cols), g[seg_ids, cols])
            return [dm]

    else:
        raise UnknownMethodError(f"unknown aggregator '{method}'", {"allowed": ["mean", "sum", "max"]})

    return _emit(out, [messages], vjp)
