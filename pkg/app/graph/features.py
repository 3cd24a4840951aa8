"""
Node and edge attribute matrices.

Node rows are ``[delay, octet1..octet4, one-hot delay bin (10)]``; edge rows are
``[edge delay, one-hot delay bin (10)]``. Continuous values enter as raw numerics.
"""

import ipaddress

import numpy as np

from app.graph.binning import BinModel

NODE_FEATURE_DIM = 15
EDGE_FEATURE_DIM = 11


def ip_octets(ip: str) -> np.ndarray:
    return np.frombuffer(ipaddress.IPv4Address(ip).packed, dtype=np.uint8).astype(np.float64)


def node_features(graph, bins: BinModel) -> np.ndarray:
    """
    Build the N_V x 15 node attribute matrix.

    Args:
        graph: AttributedGraph (only its nodes are read)
        bins: BinModel trained on the graph's node delays

    Returns:
        float64 matrix, one row per node id
    """
    delays = np.array([node.delay_ms for node in graph.nodes], dtype=np.float64)
    octets = np.stack([ip_octets(node.ip) for node in graph.nodes]) if graph.nodes else np.zeros((0, 4))
    return np.hstack([delays[:, None], octets, bins.one_hot(delays)])


def edge_features(graph, bins: BinModel) -> np.ndarray:
    """N_E x 11 edge attribute matrix; the delay column may be negative."""
    delays = np.array([edge.delay_ms for edge in graph.edges], dtype=np.float64)
    if delays.size == 0:
        return np.zeros((0, EDGE_FEATURE_DIM), dtype=np.float64)
    return np.hstack([delays[:, None], bins.one_hot(delays)])
