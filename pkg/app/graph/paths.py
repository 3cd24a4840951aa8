"""
Routing paths and anonymous-router completion.

Raw paths are extracted per (destination, probe) from traceroute records;
anonymous entries are then filled from similar paths to the same destination.
"""

from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from app.measurement.models import TracerouteRecord, validate_ipv4
from app.utils.exceptions import RecordValidationError


@dataclass(frozen=True)
class RoutingPath:
    """Hop ips from the first hop to the destination; ``None`` marks an anonymous router."""

    dst_ip: str
    entries: Tuple[Optional[str], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise RecordValidationError(f"routing path to {self.dst_ip} is empty")
        if self.entries[-1] is not None and self.entries[-1] != self.dst_ip:
            raise RecordValidationError(f"routing path to {self.dst_ip} ends at {self.entries[-1]}")

    @property
    def hop_count(self) -> int:
        return len(self.entries)

    @property
    def anonymous_positions(self) -> List[int]:
        return [i for i, ip in enumerate(self.entries) if ip is None]

    def known(self) -> List[str]:
        """Non-anonymous entries in path order."""
        return [ip for ip in self.entries if ip is not None]


def extract_paths(records: List[TracerouteRecord]) -> List[RoutingPath]:
    """
    Turn traceroute records into raw routing paths.

    One path per (dst_ip, probe_seq); identical paths to the same destination are
    kept once, first occurrence wins. Records without hops yield no path.
    """
    paths: List[RoutingPath] = []
    seen = set()
    for record in records:
        if not record.hops:
            continue
        path = RoutingPath(record.dst_ip, tuple(h.ip for h in record.hops))
        if path in seen:
            continue
        seen.add(path)
        paths.append(path)
    return paths


def _agrees(a: Tuple[Optional[str], ...], b: Tuple[Optional[str], ...]) -> bool:
    """Equal length and identical wherever both entries are known."""
    if len(a) != len(b):
        return False
    return all(x is None or y is None or x == y for x, y in zip(a, b))


def _fill(target: List[Optional[str]], donor: Tuple[Optional[str], ...]) -> None:
    for i, ip in enumerate(donor):
        if target[i] is None and ip is not None:
            target[i] = ip


def complete_paths(raw: List[RoutingPath]) -> List[RoutingPath]:
    """
    Map anonymous routers to ip addresses using similar paths.

    Raw paths are scanned in order against a growing completed set. A raw path matches
    the first completed path to the same destination with equal hop count that agrees
    on every position known in both; the two then fill each other's anonymous
    positions. A path that matches nothing joins the completed set. Each raw path's
    output is the final state of the completed path it was merged into, so known
    entries are never altered and hop counts are preserved.

    Args:
        raw: raw routing paths in file order

    Returns:
        One completed path per raw path, same order
    """
    completed: List[List[Optional[str]]] = []
    completed_dst: List[str] = []
    by_dst: Dict[str, List[int]] = {}
    link: List[int] = []

    for path in raw:
        match = None
        for j in by_dst.get(path.dst_ip, []):
            if _agrees(path.entries, tuple(completed[j])):
                match = j
                break
        if match is None:
            completed.append(list(path.entries))
            completed_dst.append(path.dst_ip)
            by_dst.setdefault(path.dst_ip, []).append(len(completed) - 1)
            link.append(len(completed) - 1)
        else:
            _fill(completed[match], path.entries)
            link.append(match)

    return [RoutingPath(completed_dst[j], tuple(completed[j])) for j in link]


def canonical_paths(completed: List[RoutingPath]) -> Dict[str, RoutingPath]:
    """Most frequent completed path per destination; the first seen wins ties."""
    counts: Dict[str, Counter] = {}
    order: Dict[str, List[RoutingPath]] = {}
    for path in completed:
        counts.setdefault(path.dst_ip, Counter())[path] += 1
        if path not in order.setdefault(path.dst_ip, []):
            order[path.dst_ip].append(path)
    result = {}
    for dst, candidates in order.items():
        best = max(counts[dst][p] for p in candidates)
        result[dst] = next(p for p in candidates if counts[dst][p] == best)
    return result


def path_to_json(path: RoutingPath) -> Dict:
    return {"dst_ip": path.dst_ip, "entries": list(path.entries)}


def path_from_json(obj: Dict) -> RoutingPath:
    return RoutingPath(validate_ipv4(obj["dst_ip"]), tuple(obj["entries"]))
