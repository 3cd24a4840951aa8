"""
Deterministic synthetic network generator.

Builds a random router tree rooted at a probing host placed at the region
center, attaches landmarks to routers and simulates repeated traceroutes with
a distance-driven delay model, Gaussian noise, anti-correlated "rule violating"
landmarks and anonymous routers.
"""

import ipaddress
from typing import Dict, List, Tuple

import networkx as nx
import numpy as np

from app.evaluation.metrics import haversine_km
from app.measurement.models import (
    GroundTruth, Hop, LandmarkRecord, SynthConfig, TracerouteRecord,
)
from app.utils.logging import PipelineLogger

ROUTER_BASE = int(ipaddress.IPv4Address("10.1.0.1"))
LANDMARK_BASE = int(ipaddress.IPv4Address("10.128.0.1"))
RTT_DECIMALS = 6
COORD_DECIMALS = 6
KM_PER_DEGREE = 111.195


def _ip(base: int, index: int) -> str:
    return str(ipaddress.IPv4Address(base + index))


def _random_position(rng: np.random.Generator, cfg: SynthConfig) -> Tuple[float, float]:
    box = cfg.region
    lat = round(float(rng.uniform(box.lat_min, box.lat_max)), COORD_DECIMALS)
    lon = round(float(rng.uniform(box.lon_min, box.lon_max)), COORD_DECIMALS)
    return lat, lon


def _near(rng: np.random.Generator, cfg: SynthConfig, lat: float, lon: float) -> Tuple[float, float]:
    """Uniform bearing and distance within ``attach_radius_km`` of (lat, lon), clipped to the region."""
    box = cfg.region
    bearing = float(rng.uniform(0.0, 2.0 * np.pi))
    km = float(rng.uniform(0.0, cfg.attach_radius_km))
    d_lat = km * np.cos(bearing) / KM_PER_DEGREE
    d_lon = km * np.sin(bearing) / (KM_PER_DEGREE * np.cos(np.radians(lat)))
    return (round(float(np.clip(lat + d_lat, box.lat_min, box.lat_max)), COORD_DECIMALS),
            round(float(np.clip(lon + d_lon, box.lon_min, box.lon_max)), COORD_DECIMALS))


def build_topology(cfg: SynthConfig, rng: np.random.Generator) -> Tuple[nx.DiGraph, List[str], List[str]]:
    """
    Generate the router tree and landmark attachments.

    Edges point from upstream (closer to the probing host) to downstream nodes;
    multi-homed routers have two upstream parents.

    Returns:
        (topology, router ips, landmark ips)
    """
    topology = nx.DiGraph()
    probe_lat, probe_lon = cfg.region.center
    topology.add_node(cfg.probe_ip, lat=round(probe_lat, COORD_DECIMALS), lon=round(probe_lon, COORD_DECIMALS),
                      kind="probe")

    routers: List[str] = []
    for i in range(cfg.n_routers):
        ip = _ip(ROUTER_BASE, i)
        lat, lon = _random_position(rng, cfg)
        candidates = [cfg.probe_ip] + routers
        parent = candidates[int(rng.integers(len(candidates)))]
        topology.add_node(ip, lat=lat, lon=lon, kind="router")
        topology.add_edge(parent, ip, primary=True)
        routers.append(ip)

    # routers 1.. have at least two possible upstream nodes
    eligible = list(range(1, cfg.n_routers))
    n_extra = min(cfg.extra_edges, len(eligible))
    if n_extra:
        for idx in sorted(rng.choice(eligible, size=n_extra, replace=False).tolist()):
            ip = routers[idx]
            primary = next(iter(topology.predecessors(ip)))
            candidates = [c for c in [cfg.probe_ip] + routers[:idx] if c != primary]
            secondary = candidates[int(rng.integers(len(candidates)))]
            topology.add_edge(secondary, ip, primary=False)

    landmarks: List[str] = []
    for i in range(cfg.n_landmarks):
        ip = _ip(LANDMARK_BASE, i)
        router = routers[int(rng.integers(len(routers)))]
        if cfg.attach_radius_km > 0:
            lat, lon = _near(rng, cfg, topology.nodes[router]["lat"], topology.nodes[router]["lon"])
        else:
            lat, lon = _random_position(rng, cfg)
        topology.add_node(ip, lat=lat, lon=lon, kind="landmark")
        topology.add_edge(router, ip, primary=True)
        landmarks.append(ip)
    return topology, routers, landmarks


def _link_km(topology: nx.DiGraph, a: str, b: str) -> float:
    na, nb = topology.nodes[a], topology.nodes[b]
    return float(haversine_km(na["lat"], na["lon"], nb["lat"], nb["lon"]))


def _walk_up(topology: nx.DiGraph, node: str, probe_ip: str, rng: np.random.Generator = None) -> List[str]:
    """Path from the probing host to ``node``; with ``rng`` each multi-homed router picks an upstream at random."""
    path = [node]
    while path[-1] != probe_ip:
        parents = sorted(topology.predecessors(path[-1]),
                         key=lambda p: not topology.edges[p, path[-1]]["primary"])
        if rng is not None and len(parents) > 1:
            path.append(parents[int(rng.integers(len(parents)))])
        else:
            path.append(parents[0])
    return path[::-1]


def _cumulative_km(topology: nx.DiGraph, path: List[str]) -> List[float]:
    total, out = 0.0, []
    for a, b in zip(path, path[1:]):
        total += _link_km(topology, a, b)
        out.append(total)
    return out


def synth_network(cfg: SynthConfig) -> Tuple[List[TracerouteRecord], List[LandmarkRecord], GroundTruth]:
    """
    Generate traceroutes, landmarks and ground truth from a seeded config.

    Args:
        cfg: validated SynthConfig

    Returns:
        (traceroute records, landmark records, ground truth incl. routers and probing host)
    """
    log = PipelineLogger("synth")
    log.log_stage_start(n_landmarks=cfg.n_landmarks, n_routers=cfg.n_routers, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    topology, routers, landmark_ips = build_topology(cfg, rng)

    primary_km = {ip: _cumulative_km(topology, _walk_up(topology, ip, cfg.probe_ip))[-1] for ip in landmark_ips}
    max_km = max(primary_km.values())
    n_violators = int(round(cfg.rule_violation_fraction * cfg.n_landmarks))
    violators = set(rng.choice(len(landmark_ips), size=n_violators, replace=False).tolist()) if n_violators else set()

    records: List[TracerouteRecord] = []
    for li, dst in enumerate(landmark_ips):
        for seq in range(cfg.repetitions):
            path = _walk_up(topology, dst, cfg.probe_ip, rng if cfg.extra_edges else None)
            cumulative = _cumulative_km(topology, path)
            hops = []
            for ttl, (ip, km) in enumerate(zip(path[1:], cumulative), start=1):
                is_final = ip == dst
                if is_final and li in violators:
                    km = max(max_km - km, 0.0)
                noise = float(rng.normal(0.0, cfg.per_hop_noise_ms))
                rtt = round(max(km / cfg.prop_speed_km_per_ms + noise, 0.0), RTT_DECIMALS)
                anonymous = (not is_final) and float(rng.random()) < cfg.anonymity_prob
                hops.append(Hop(ttl=ttl) if anonymous else Hop(ttl=ttl, ip=ip, rtt_ms=rtt))
            records.append(TracerouteRecord(dst_ip=dst, probe_seq=seq, hops=tuple(hops)))

    landmarks = [LandmarkRecord(ip, topology.nodes[ip]["lat"], topology.nodes[ip]["lon"]) for ip in landmark_ips]
    truth: Dict[str, Tuple[float, float]] = {
        ip: (topology.nodes[ip]["lat"], topology.nodes[ip]["lon"])
        for ip in [cfg.probe_ip] + routers + landmark_ips
    }
    log.log_stage_complete(records=len(records), violators=len(violators))
    return records, landmarks, GroundTruth(truth)


def attachment_routers(cfg: SynthConfig) -> Dict[str, str]:
    """Landmark ip -> attachment router ip for the topology ``cfg`` generates."""
    topology, _, landmark_ips = build_topology(cfg, np.random.default_rng(cfg.seed))
    return {ip: next(iter(topology.predecessors(ip))) for ip in landmark_ips}
