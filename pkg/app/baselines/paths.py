"""
Routing-path index for the delay-based baselines.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Set, Tuple

from app.graph.builder import AttributedGraph, NodeRole
from app.graph.paths import canonical_paths
from app.utils.exceptions import UnknownNodeError


@dataclass
class PathIndex:
    """
    Per destination, the hop ips of its canonical completed path (anonymous hops dropped,
    destination excluded) and every ip's delay from the probing host.
    """

    probe_ip: str
    hops: Dict[str, Tuple[str, ...]]
    delays: Dict[str, float]
    routers: Tuple[str, ...] = ()
    via: Dict[str, Set[str]] = field(default_factory=dict)

    @classmethod
    def from_graph(cls, graph: AttributedGraph) -> "PathIndex":
        hops = {
            dst: tuple(ip for ip in path.known() if ip != dst)
            for dst, path in canonical_paths(graph.paths).items()
        }
        via: Dict[str, Set[str]] = {}
        for dst, ips in hops.items():
            for ip in ips:
                via.setdefault(ip, set()).add(dst)
        return cls(
            probe_ip=graph.probe_ip,
            hops=hops,
            delays={node.ip: node.delay_ms for node in graph.nodes},
            routers=tuple(graph.nodes[i].ip for i in graph.ids_with_role(NodeRole.ROUTER)),
            via=via,
        )

    def path_of(self, ip: str) -> Tuple[str, ...]:
        if ip == self.probe_ip:
            return ()
        try:
            return self.hops[ip]
        except KeyError:
            raise UnknownNodeError(f"no routing path to {ip}", {"ip": ip})

    def delay(self, ip: str) -> float:
        try:
            return self.delays[ip]
        except KeyError:
            raise UnknownNodeError(f"no delay observed for {ip}", {"ip": ip})

    def destinations_via(self, router_ip: str) -> List[str]:
        return sorted(self.via.get(router_ip, ()))


def closest_common_router(target: str, landmark: str, index: PathIndex) -> Tuple[str, float]:
    """
    Last hop shared by the target's and the landmark's paths.

    The shared hop with the largest delay on the target's path wins (later position
    on ties); with no shared hop the probing host is returned with delay 0.

    Returns:
        (router ip, d_pr)
    """
    target_hops = index.path_of(target)
    shared = set(index.path_of(landmark))
    best = None
    for position, ip in enumerate(target_hops):
        if ip not in shared:
            continue
        key = (index.delay(ip), position)
        if best is None or key >= best[0]:
            best = (key, ip)
    if best is None:
        return index.probe_ip, 0.0
    return best[1], best[0][0]


def relative_delay(target: str, landmark: str, index: PathIndex) -> float:
    """(d_pt - d_pr) + (d_pl - d_pr); zero when target and landmark coincide."""
    if target == landmark:
        return 0.0
    _, d_pr = closest_common_router(target, landmark, index)
    return (index.delay(target) - d_pr) + (index.delay(landmark) - d_pr)
