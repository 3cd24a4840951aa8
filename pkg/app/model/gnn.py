"""
Edge-conditioned message-passing model.

encode -> L message-passing layers -> decoder. Every undirected edge carries
messages both ways with the same per-edge weight matrix, and receivers combine
their messages in ascending neighbor id order.
"""

from typing import Dict, Literal, Optional, Tuple

import numpy as np

from app.model.params import BN_BETA, BN_GAMMA, ModelConfig, ModelParams
from app.numeric.tensor import (
    Tape, Tensor, add, affine, batch_norm, batched_matvec, concat_columns,
    gather_rows, relu, reshape, segment_aggregate, sigmoid,
)
from app.utils.exceptions import DimensionError

Mode = Literal["train", "eval"]


def bind(params: ModelParams, tape: Optional[Tape] = None) -> Dict[str, Tensor]:
    """Wrap every trainable array as a Tensor, watched on ``tape`` when given."""
    if tape is None:
        return {name: Tensor(value) for name, value in params.weights.items()}
    return {name: tape.watch(value, name) for name, value in params.weights.items()}


def encode(graph, theta: Dict[str, Tensor]) -> Tuple[Tensor, Tensor]:
    """
    Initial node and edge embeddings.

    Returns:
        (H0: N_V x G, ID half then attribute half; E_emb: N_E x K)
    """
    attributes = affine(graph.node_features, theta["encoder.w_attr"], theta["encoder.b_attr"])
    h0 = concat_columns([theta["encoder.q_v_id"], attributes])
    e_emb = affine(graph.edge_features, theta["encoder.q_e"], theta["encoder.b_e"])
    return h0, e_emb


def edge_weight_matrix(e_emb, theta: Dict[str, Tensor], layer: int, node_dim: int) -> Tensor:
    """Per-edge G x G message weights, reshaped row-major from the edge network output."""
    hidden = relu(affine(e_emb, theta[f"layers.{layer}.w_edge1"], theta[f"layers.{layer}.b_edge1"]))
    flat = affine(hidden, theta[f"layers.{layer}.w_edge2"], theta[f"layers.{layer}.b_edge2"])
    return reshape(flat, (flat.shape[0], node_dim, node_dim))


def message(h_j, w_e) -> np.ndarray:
    """m = W_e h_j for a single neighbor."""
    return np.asarray(w_e, dtype=np.float64) @ np.asarray(h_j, dtype=np.float64)


def aggregate(messages, method: str) -> np.ndarray:
    """Combine one receiver's messages; no messages gives the zero vector."""
    messages = np.asarray(messages, dtype=np.float64)
    if messages.ndim != 2:
        raise DimensionError("messages must be a 2-d array; an empty set has shape (0, G)")
    segments = np.zeros(messages.shape[0], dtype=np.int64)
    return segment_aggregate(messages, segments, 1, method).value[0]


def update(h_prev, aggregated) -> Tensor:
    return relu(add(h_prev, aggregated))


def mp_forward(graph, h0: Tensor, e_emb: Tensor, theta: Dict[str, Tensor], config: ModelConfig) -> Tensor:
    """Run ``config.num_layers`` message-passing layers and return H_L."""
    src, dst, eid = graph.message_index()
    h = h0
    for layer in range(config.num_layers):
        w_edges = edge_weight_matrix(e_emb, theta, layer, config.node_dim)
        messages = batched_matvec(gather_rows(w_edges, eid), gather_rows(h, src))
        h = update(h, segment_aggregate(messages, dst, graph.n_nodes, config.aggregator))
    return h


def decode(h: Tensor, theta: Dict[str, Tensor], params: ModelParams, mode: Mode = "eval",
           update_stats: bool = True) -> Tensor:
    """
    Map embeddings to (lat, lon) outputs.

    hidden = relu(h W_hid + b); batch norm for the BN variants; output affine;
    sigmoid for the sigmoid variants, which then emit scaled coordinates in (0, 1).
    """
    config = params.config
    hidden = relu(affine(h, theta["decoder.w_hid"], theta["decoder.b_hid"]))
    if config.uses_batch_norm:
        params.bn.training = mode == "train"
        hidden = batch_norm(hidden, params.bn, theta[BN_GAMMA], theta[BN_BETA], update_stats=update_stats)
    out = affine(hidden, theta["decoder.w_loc"], theta["decoder.b_loc"])
    return sigmoid(out) if config.uses_sigmoid else out


def forward(graph, params: ModelParams, mode: Mode = "eval", tape: Optional[Tape] = None,
            update_stats: bool = True) -> Tensor:
    """
    Full model: predictions for every node, routers included.

    Args:
        graph: AttributedGraph
        params: model parameters (batch-norm running stats update in train mode)
        mode: "train" or "eval"
        tape: records the computation for backward when given
        update_stats: whether train-mode batch norm updates running statistics

    Returns:
        N_V x 2 tensor of (scaled) coordinates
    """
    theta = bind(params, tape)
    h0, e_emb = encode(graph, theta)
    h = mp_forward(graph, h0, e_emb, theta, params.config)
    return decode(h, theta, params, mode, update_stats)


def embeddings(graph, params: ModelParams) -> np.ndarray:
    """Layer-L node embeddings without decoding."""
    theta = bind(params)
    h0, e_emb = encode(graph, theta)
    return mp_forward(graph, h0, e_emb, theta, params.config).value


def predict(graph, params: ModelParams) -> np.ndarray:
    """Eval-mode outputs for every node as a plain array."""
    return forward(graph, params, mode="eval").value
