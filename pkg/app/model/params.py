"""
GNN parameter container and initialization.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import numpy as np

from app.config import ModelConfig
from app.graph.features import EDGE_FEATURE_DIM, NODE_FEATURE_DIM
from app.numeric.tensor import BatchNormState

__all__ = ["ModelConfig", "ModelParams", "init_params", "parameter_count", "parameter_shapes"]

BN_GAMMA = "decoder.bn.gamma"
BN_BETA = "decoder.bn.beta"


def parameter_shapes(config: ModelConfig, n_nodes: int) -> Dict[str, tuple]:
    """Name -> shape of every trainable array, in initialization order."""
    G, K, H = config.node_dim, config.edge_dim, config.edge_hidden_units
    half = G // 2
    shapes = {
        "encoder.q_v_id": (n_nodes, half),
        "encoder.w_attr": (NODE_FEATURE_DIM, half),
        "encoder.b_attr": (half,),
        "encoder.q_e": (EDGE_FEATURE_DIM, K),
        "encoder.b_e": (K,),
    }
    for layer in range(config.num_layers):
        shapes[f"layers.{layer}.w_edge1"] = (K, H)
        shapes[f"layers.{layer}.b_edge1"] = (H,)
        shapes[f"layers.{layer}.w_edge2"] = (H, G * G)
        shapes[f"layers.{layer}.b_edge2"] = (G * G,)
    shapes["decoder.w_hid"] = (G, G)
    shapes["decoder.b_hid"] = (G,)
    if config.uses_batch_norm:
        shapes[BN_GAMMA] = (G,)
        shapes[BN_BETA] = (G,)
    shapes["decoder.w_loc"] = (G, 2)
    shapes["decoder.b_loc"] = (2,)
    return shapes


def parameter_count(config: ModelConfig, n_nodes: int) -> int:
    """Closed-form number of trainable scalars."""
    G, K, H, L = config.node_dim, config.edge_dim, config.edge_hidden_units, config.num_layers
    total = n_nodes * G // 2 + NODE_FEATURE_DIM * G // 2 + G // 2
    total += EDGE_FEATURE_DIM * K + K
    total += L * (K * H + H + H * G * G + G * G)
    total += G * G + G
    if config.uses_batch_norm:
        total += 2 * G
    total += 2 * G + 2
    return total


def _is_weight(name: str) -> bool:
    leaf = name.rsplit(".", 1)[-1]
    return leaf.startswith("w_") or leaf.startswith("q_")


@dataclass
class ModelParams:
    """All trainable arrays of the model plus the decoder batch-norm running statistics."""

    config: ModelConfig
    weights: Dict[str, np.ndarray] = field(default_factory=dict)
    bn: Optional[BatchNormState] = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.weights[name]

    @property
    def n_nodes(self) -> int:
        return self.weights["encoder.q_v_id"].shape[0]

    def count(self) -> int:
        return int(sum(w.size for w in self.weights.values()))

    def regularized_names(self) -> List[str]:
        """Names under the L2 penalty: weight matrices and embedding tables, or everything."""
        if self.config.regularize_all:
            return list(self.weights)
        return [name for name in self.weights if _is_weight(name)]

    def l2_penalty(self, names: Optional[Iterable[str]] = None) -> float:
        names = self.regularized_names() if names is None else names
        return float(sum(np.sum(self.weights[n] * self.weights[n]) for n in names))

    def with_weights(self, weights: Dict[str, np.ndarray]) -> "ModelParams":
        """Replace the trainable arrays, keeping the batch-norm scale/shift in sync."""
        self.weights = dict(weights)
        if self.bn is not None:
            self.bn.gamma = self.weights[BN_GAMMA]
            self.bn.beta = self.weights[BN_BETA]
        return self

    def copy(self) -> "ModelParams":
        return ModelParams(
            config=self.config,
            weights={k: v.copy() for k, v in self.weights.items()},
            bn=self.bn.copy() if self.bn is not None else None,
        )


def init_params(config: ModelConfig, graph) -> ModelParams:
    """
    Draw initial parameters for ``graph``.

    Node-ID embeddings ~ N(0, 1); other weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in));
    biases 0; batch-norm gamma 1 and beta 0.

    Args:
        config: model configuration (its seed drives every draw)
        graph: AttributedGraph the node-ID table is sized for

    Returns:
        ModelParams
    """
    rng = np.random.default_rng(config.seed)
    weights: Dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(config, graph.n_nodes).items():
        if name == "encoder.q_v_id":
            weights[name] = rng.standard_normal(shape)
        elif name == BN_GAMMA:
            weights[name] = np.ones(shape)
        elif _is_weight(name):
            bound = 1.0 / np.sqrt(shape[0])
            weights[name] = rng.uniform(-bound, bound, size=shape)
        else:
            weights[name] = np.zeros(shape)

    bn = BatchNormState.fresh(config.node_dim) if config.uses_batch_norm else None
    return ModelParams(config=config, weights=weights, bn=bn).with_weights(weights)
