"""
Attributed graph construction.

Turns completed routing paths into G = (V, E, XV, XE): one node per observed ip
plus the probing host (node 0), one undirected edge per adjacent pair of known
hops, minimum-rtt node delays, head-to-tail edge delays and binned features.
"""

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

import numpy as np

from app.graph.binning import BinModel, kmeans_bin
from app.graph.features import edge_features, node_features
from app.graph.paths import RoutingPath, path_from_json, path_to_json
from app.measurement.models import LandmarkRecord, TracerouteRecord
from app.utils.exceptions import DataError, MissingDestinationError, UnknownNodeError
from app.utils.logging import PipelineLogger

BUNDLE_VERSION = 1


class NodeRole(str, Enum):
    """Role of an ip in the measurement."""
    PROBING_HOST = "ProbingHost"
    LANDMARK = "Landmark"
    TARGET = "Target"
    ROUTER = "Router"


@dataclass(frozen=True)
class GraphNode:
    node_id: int
    ip: str
    role: NodeRole
    delay_ms: float


@dataclass(frozen=True)
class GraphEdge:
    """Undirected link; ``head`` is the endpoint nearer the probing host."""
    head: int
    tail: int
    delay_ms: float


@dataclass
class AttributedGraph:
    """Graph with node/edge attributes, delay bins and the completed paths it came from."""

    nodes: List[GraphNode]
    edges: List[GraphEdge]
    node_features: np.ndarray
    edge_features: np.ndarray
    node_bins: BinModel
    edge_bins: BinModel
    paths: List[RoutingPath] = field(default_factory=list)
    orientation_conflicts: int = 0
    probe_location: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        self._index = {node.ip: node.node_id for node in self.nodes}
        self._adjacency: Optional[List[List[Tuple[int, int]]]] = None
        self._messages: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def probe_id(self) -> int:
        return 0

    @property
    def probe_ip(self) -> str:
        return self.nodes[0].ip

    def node_id(self, ip: str) -> int:
        try:
            return self._index[ip]
        except KeyError:
            raise UnknownNodeError(f"ip {ip} is not a node of the graph", {"ip": ip})

    def __contains__(self, ip: str) -> bool:
        return ip in self._index

    def ids_with_role(self, role: NodeRole) -> List[int]:
        return [node.node_id for node in self.nodes if node.role == role]

    @property
    def adjacency(self) -> List[List[Tuple[int, int]]]:
        """Per node, ``(neighbor_id, edge_index)`` pairs in ascending neighbor id."""
        if self._adjacency is None:
            adjacency: List[List[Tuple[int, int]]] = [[] for _ in self.nodes]
            for k, edge in enumerate(self.edges):
                adjacency[edge.head].append((edge.tail, k))
                adjacency[edge.tail].append((edge.head, k))
            self._adjacency = [sorted(neighbors) for neighbors in adjacency]
        return self._adjacency

    def message_index(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Directed message slots for both directions of every edge.

        Returns:
            (source ids, receiver ids, edge indices) sorted by receiver then source
        """
        if self._messages is None:
            src, dst, eid = [], [], []
            for receiver, neighbors in enumerate(self.adjacency):
                for neighbor, k in neighbors:
                    src.append(neighbor)
                    dst.append(receiver)
                    eid.append(k)
            self._messages = (
                np.asarray(src, dtype=np.int64),
                np.asarray(dst, dtype=np.int64),
                np.asarray(eid, dtype=np.int64),
            )
        return self._messages


def observed_min_rtt(records: Iterable[TracerouteRecord]) -> Dict[str, float]:
    """Minimum rtt per ip across all records, in first-appearance order."""
    delays: Dict[str, float] = {}
    for record in records:
        for hop in record.hops:
            if hop.anonymous:
                continue
            if hop.ip not in delays or hop.rtt_ms < delays[hop.ip]:
                delays[hop.ip] = hop.rtt_ms
    return delays


def build_graph(
    completed: List[RoutingPath],
    landmarks: List[LandmarkRecord],
    targets: Set[str],
    records: List[TracerouteRecord],
    probe_ip: str,
    probe_location: Optional[Tuple[float, float]] = None,
    bin_seed: int = 0,
) -> AttributedGraph:
    """
    Build the attributed graph from completed routing paths.

    Args:
        completed: completed routing paths
        landmarks: landmark records; each must be a path destination
        targets: target ips; each must be a path destination
        records: raw traceroute records (node delays are their minimum rtt)
        probe_ip: ip of the probing host, node 0 with delay 0
        probe_location: known probing-host coordinate, kept with the graph
        bin_seed: seed of both k-means delay binnings

    Returns:
        AttributedGraph
    """
    log = PipelineLogger("build_graph")
    destinations = {path.dst_ip for path in completed}
    landmark_ips = {lm.ip for lm in landmarks}
    for ip in sorted(landmark_ips | set(targets)):
        if ip not in destinations:
            kind = "landmark" if ip in landmark_ips else "target"
            raise MissingDestinationError(f"{kind} {ip} never observed as a path destination", {"ip": ip})

    min_rtt = observed_min_rtt(records)
    ips: List[str] = [probe_ip]
    index: Dict[str, int] = {probe_ip: 0}
    for path in completed:
        for ip in path.known():
            if ip not in index:
                if ip not in min_rtt:
                    raise DataError(f"ip {ip} in a routing path has no observed rtt", {"ip": ip})
                index[ip] = len(ips)
                ips.append(ip)

    def role_of(ip: str) -> NodeRole:
        if ip == probe_ip:
            return NodeRole.PROBING_HOST
        if ip in landmark_ips:
            return NodeRole.LANDMARK
        if ip in targets:
            return NodeRole.TARGET
        return NodeRole.ROUTER

    nodes = [
        GraphNode(i, ip, role_of(ip), 0.0 if i == 0 else min_rtt[ip])
        for i, ip in enumerate(ips)
    ]

    edges: List[GraphEdge] = []
    orientation: Dict[Tuple[int, int], Tuple[int, int]] = {}
    conflicts = 0
    for path in completed:
        chain = [0] + [index[ip] for ip in path.known()]
        for head, tail in zip(chain, chain[1:]):
            if head == tail:
                continue
            key = (min(head, tail), max(head, tail))
            if key in orientation:
                if orientation[key] != (head, tail):
                    conflicts += 1
                continue
            orientation[key] = (head, tail)
            edges.append(GraphEdge(head, tail, nodes[tail].delay_ms - nodes[head].delay_ms))
    log.log_orientation_conflicts(conflicts)

    node_bins = kmeans_bin([n.delay_ms for n in nodes], seed=bin_seed)
    edge_bins = kmeans_bin([e.delay_ms for e in edges], seed=bin_seed) if edges else BinModel((0.0,) * 10)
    graph = AttributedGraph(
        nodes=nodes,
        edges=edges,
        node_features=np.zeros((0, 0)),
        edge_features=np.zeros((0, 0)),
        node_bins=node_bins,
        edge_bins=edge_bins,
        paths=list(completed),
        orientation_conflicts=conflicts,
        probe_location=probe_location,
    )
    graph.node_features = node_features(graph, node_bins)
    graph.edge_features = edge_features(graph, edge_bins)
    log.log_stage_complete(n_nodes=graph.n_nodes, n_edges=graph.n_edges)
    return graph


def nodes_csv(graph: AttributedGraph) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["node_id", "ip", "role", "delay_ms"])
    for node in graph.nodes:
        writer.writerow([node.node_id, node.ip, node.role.value, repr(float(node.delay_ms))])
    return buffer.getvalue().encode("utf-8")


def edges_csv(graph: AttributedGraph) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["head_id", "tail_id", "delay_ms"])
    for edge in graph.edges:
        writer.writerow([edge.head, edge.tail, repr(float(edge.delay_ms))])
    return buffer.getvalue().encode("utf-8")


def save_bundle(graph: AttributedGraph, path: Union[str, Path]) -> Path:
    """Write the graph bundle (npz, no pickled objects) consumed by train, geolocate and baseline."""
    path = Path(path)
    meta = {
        "version": BUNDLE_VERSION,
        "paths": [path_to_json(p) for p in graph.paths],
        "orientation_conflicts": graph.orientation_conflicts,
        "probe_location": list(graph.probe_location) if graph.probe_location else None,
    }
    with open(path, "wb") as f:
        np.savez(
            f,
            node_ip=np.array([n.ip for n in graph.nodes], dtype="U15"),
            node_role=np.array([n.role.value for n in graph.nodes], dtype="U11"),
            node_delay=np.array([n.delay_ms for n in graph.nodes], dtype=np.float64),
            edge_head=np.array([e.head for e in graph.edges], dtype=np.int64),
            edge_tail=np.array([e.tail for e in graph.edges], dtype=np.int64),
            edge_delay=np.array([e.delay_ms for e in graph.edges], dtype=np.float64),
            node_features=graph.node_features,
            edge_features=graph.edge_features,
            node_centers=np.array(graph.node_bins.centers, dtype=np.float64),
            edge_centers=np.array(graph.edge_bins.centers, dtype=np.float64),
            meta=np.array(json.dumps(meta, sort_keys=True)),
        )
    return path


def load_bundle(path: Union[str, Path]) -> AttributedGraph:
    """Read a graph bundle written by :func:`save_bundle`."""
    path = Path(path)
    try:
        data = np.load(path, allow_pickle=False)
    except (ValueError, OSError) as e:
        if isinstance(e, FileNotFoundError):
            raise
        raise DataError(f"{path}: not a graph bundle ({e})")
    with data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != BUNDLE_VERSION:
            raise DataError(f"{path}: unsupported bundle version {meta.get('version')}")
        nodes = [
            GraphNode(i, str(ip), NodeRole(str(role)), float(delay))
            for i, (ip, role, delay) in enumerate(zip(data["node_ip"], data["node_role"], data["node_delay"]))
        ]
        edges = [
            GraphEdge(int(h), int(t), float(d))
            for h, t, d in zip(data["edge_head"], data["edge_tail"], data["edge_delay"])
        ]
        probe_location = meta.get("probe_location")
        return AttributedGraph(
            nodes=nodes,
            edges=edges,
            node_features=data["node_features"].copy(),
            edge_features=data["edge_features"].copy(),
            node_bins=BinModel(tuple(float(c) for c in data["node_centers"])),
            edge_bins=BinModel(tuple(float(c) for c in data["edge_centers"])),
            paths=[path_from_json(p) for p in meta["paths"]],
            orientation_conflicts=int(meta["orientation_conflicts"]),
            probe_location=tuple(probe_location) if probe_location else None,
        )
