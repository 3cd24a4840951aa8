"""
Measurement models and data structures.

Defines the raw measurement units (traceroute hops and records), landmark
records and synthetic ground truth, with validation of their invariants.
"""

import ipaddress
import math
from dataclasses import dataclass, field
from typing import Optional, List, Dict, Tuple

from app.config import SynthConfig, RegionBox
from app.utils.exceptions import RecordValidationError, RangeError

__all__ = [
    "Hop", "TracerouteRecord", "LandmarkRecord", "GroundTruth",
    "SynthConfig", "RegionBox", "validate_ipv4",
]


def validate_ipv4(value: str) -> str:
    """Return the dotted-quad form of an IPv4 address or raise RecordValidationError."""
    try:
        return str(ipaddress.IPv4Address(value))
    except (ipaddress.AddressValueError, ValueError, TypeError):
        raise RecordValidationError(f"invalid IPv4 address: {value!r}")


@dataclass(frozen=True)
class Hop:
    """One hop of a traceroute; anonymous routers expose neither ip nor rtt."""

    ttl: int
    ip: Optional[str] = None
    rtt_ms: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.ttl, int) or isinstance(self.ttl, bool) or self.ttl < 1:
            raise RecordValidationError(f"ttl must be a positive integer, got {self.ttl!r}")
        if (self.ip is None) != (self.rtt_ms is None):
            raise RecordValidationError(f"hop {self.ttl}: ip and rtt_ms must both be present or both absent")
        if self.ip is not None:
            object.__setattr__(self, "ip", validate_ipv4(self.ip))
            rtt = float(self.rtt_ms)
            if not math.isfinite(rtt) or rtt < 0:
                raise RecordValidationError(f"hop {self.ttl}: rtt_ms must be finite and >= 0")
            object.__setattr__(self, "rtt_ms", rtt)

    @property
    def anonymous(self) -> bool:
        return self.ip is None


@dataclass(frozen=True)
class TracerouteRecord:
    """One probe's hop-by-hop observation of a destination."""

    dst_ip: str
    probe_seq: int
    hops: Tuple[Hop, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "dst_ip", validate_ipv4(self.dst_ip))
        if not isinstance(self.probe_seq, int) or isinstance(self.probe_seq, bool) or self.probe_seq < 0:
            raise RecordValidationError(f"probe_seq must be a non-negative integer, got {self.probe_seq!r}")
        object.__setattr__(self, "hops", tuple(self.hops))
        for expected, hop in enumerate(self.hops, start=1):
            if hop.ttl != expected:
                if hop.ttl > expected:
                    raise RecordValidationError(f"ttl gap: expected {expected}, got {hop.ttl}")
                raise RecordValidationError(f"non-monotone ttl: expected {expected}, got {hop.ttl}")
        if self.hops and not self.hops[-1].anonymous and self.hops[-1].ip != self.dst_ip:
            raise RecordValidationError(
                f"final hop {self.hops[-1].ip} does not match destination {self.dst_ip}"
            )

    def to_dict(self) -> Dict:
        """Convert record to the JSON Lines object layout."""
        return {
            "dst_ip": self.dst_ip,
            "probe_seq": self.probe_seq,
            "hops": [{"ttl": h.ttl, "ip": h.ip, "rtt_ms": h.rtt_ms} for h in self.hops],
        }


@dataclass(frozen=True)
class LandmarkRecord:
    """An IPv4 address with a known location."""

    ip: str
    lat: float
    lon: float

    def __post_init__(self):
        object.__setattr__(self, "ip", validate_ipv4(self.ip))
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
            raise RangeError(f"latitude {self.lat} outside [-90, 90]")
        if not (math.isfinite(lon) and -180.0 <= lon <= 180.0):
            raise RangeError(f"longitude {self.lon} outside [-180, 180]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)

    @property
    def coord(self) -> Tuple[float, float]:
        return (self.lat, self.lon)


@dataclass
class GroundTruth:
    """Locations of every generated node, routers and probing host included."""

    locations: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    def __contains__(self, ip: str) -> bool:
        return ip in self.locations

    def __getitem__(self, ip: str) -> Tuple[float, float]:
        return self.locations[ip]

    def __len__(self) -> int:
        return len(self.locations)

    def as_records(self) -> List[LandmarkRecord]:
        return [LandmarkRecord(ip, lat, lon) for ip, (lat, lon) in self.locations.items()]
