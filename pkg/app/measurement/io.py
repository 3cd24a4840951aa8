"""
Measurement file parsing and serialization.

Traceroute files are UTF-8 JSON Lines; landmark, ground-truth and prediction
files are UTF-8 CSV with header ``ip,lat,lon``. Serialization is canonical so
that files written here round-trip byte for byte.
"""

import csv
import io
import json
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, Iterator, List, Optional, Tuple, Union

from app.measurement.models import (
    GroundTruth, Hop, LandmarkRecord, RegionBox, TracerouteRecord, validate_ipv4,
)
from app.utils.exceptions import (
    DataError, DuplicateError, ParseError, RangeError, RecordValidationError,
)
from app.utils.logging import get_logger

logger = get_logger("measurement.io")

Stream = Union[bytes, BinaryIO]
COORD_HEADER = ["ip", "lat", "lon"]


def _read_text(stream: Stream) -> str:
    data = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    if isinstance(data, str):
        return data
    try:
        return bytes(data).decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"file is not valid UTF-8: {e}")


def _parse_hop(obj, lineno: int) -> Hop:
    if not isinstance(obj, dict) or "ttl" not in obj:
        raise ParseError("hop must be an object with a ttl", line=lineno)
    ttl = obj.get("ttl")
    ip = obj.get("ip")
    rtt = obj.get("rtt_ms")
    if not isinstance(ttl, int) or isinstance(ttl, bool):
        raise ParseError(f"ttl must be an integer, got {ttl!r}", line=lineno)
    if ip is not None and not isinstance(ip, str):
        raise ParseError(f"ip must be a string or null, got {ip!r}", line=lineno)
    if rtt is not None and (isinstance(rtt, bool) or not isinstance(rtt, (int, float))):
        raise ParseError(f"rtt_ms must be a number or null, got {rtt!r}", line=lineno)
    return Hop(ttl=ttl, ip=ip, rtt_ms=float(rtt) if rtt is not None else None)


def parse_traceroutes(stream: Stream) -> List[TracerouteRecord]:
    """
    Parse a JSON Lines traceroute file.

    Args:
        stream: bytes or a binary file object

    Returns:
        One TracerouteRecord per non-blank line, in file order
    """
    records = []
    for lineno, line in enumerate(_read_text(stream).split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"malformed JSON: {e.msg}", line=lineno)
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", line=lineno)
        missing = [key for key in ("dst_ip", "probe_seq", "hops") if key not in obj]
        if missing:
            raise ParseError(f"missing keys: {', '.join(missing)}", line=lineno)
        if not isinstance(obj["hops"], list):
            raise ParseError("hops must be an array", line=lineno)
        if not isinstance(obj["dst_ip"], str):
            raise ParseError("dst_ip must be a string", line=lineno)
        try:
            hops = tuple(_parse_hop(h, lineno) for h in obj["hops"])
            records.append(TracerouteRecord(dst_ip=obj["dst_ip"], probe_seq=obj["probe_seq"], hops=hops))
        except RecordValidationError as e:
            raise RecordValidationError(e.message, line=lineno, details=e.details)
    return records


def serialize_traceroutes(records: Iterable[TracerouteRecord]) -> bytes:
    """Serialize records to canonical JSON Lines bytes."""
    lines = [json.dumps(r.to_dict(), separators=(",", ":")) for r in records]
    return "".join(line + "\n" for line in lines).encode("utf-8")


def _iter_coordinate_rows(stream: Stream) -> Iterator[Tuple[int, str, float, float]]:
    reader = csv.reader(io.StringIO(_read_text(stream)))
    header = next(reader, None)
    if header is None:
        return
    if [h.strip() for h in header] != COORD_HEADER:
        raise ParseError(f"expected header 'ip,lat,lon', got {','.join(header)!r}", line=1)
    for rowno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", line=rowno)
        ip, lat, lon = (cell.strip() for cell in row)
        try:
            yield rowno, ip, float(lat), float(lon)
        except ValueError:
            raise ParseError(f"non-numeric coordinate in {row!r}", line=rowno)


def parse_landmarks(stream: Stream, region: Optional[RegionBox] = None) -> List[LandmarkRecord]:
    """
    Parse a landmark CSV file.

    Args:
        stream: bytes or a binary file object with header ``ip,lat,lon``
        region: optional declared region box every landmark must fall into

    Returns:
        One LandmarkRecord per data row
    """
    landmarks: List[LandmarkRecord] = []
    seen = set()
    for rowno, ip, lat, lon in _iter_coordinate_rows(stream):
        try:
            record = LandmarkRecord(ip=ip, lat=lat, lon=lon)
        except RangeError as e:
            raise RangeError(e.message, row=rowno)
        except RecordValidationError as e:
            raise RecordValidationError(e.message, line=rowno)
        if region is not None and not region.contains(record.lat, record.lon):
            raise RangeError(f"{ip} at ({lat}, {lon}) outside declared region", row=rowno)
        if record.ip in seen:
            raise DuplicateError(f"row {rowno}: duplicate landmark ip {record.ip}", {"ip": record.ip})
        seen.add(record.ip)
        landmarks.append(record)
    return landmarks


def serialize_coordinates(rows: Iterable[Tuple[str, float, float]]) -> bytes:
    """Serialize ``(ip, lat, lon)`` rows to canonical ``ip,lat,lon`` CSV bytes."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(COORD_HEADER)
    for ip, lat, lon in rows:
        writer.writerow([ip, repr(float(lat)), repr(float(lon))])
    return buffer.getvalue().encode("utf-8")


def serialize_landmarks(landmarks: Iterable[LandmarkRecord]) -> bytes:
    return serialize_coordinates((lm.ip, lm.lat, lm.lon) for lm in landmarks)


def parse_truth(stream: Stream) -> GroundTruth:
    """Parse a ground-truth CSV file (same shape as landmarks, routers included)."""
    return GroundTruth({lm.ip: lm.coord for lm in parse_landmarks(stream)})


def serialize_truth(truth: GroundTruth) -> bytes:
    return serialize_coordinates((ip, lat, lon) for ip, (lat, lon) in truth.locations.items())


def parse_predictions(stream: Stream) -> Dict[str, Tuple[float, float]]:
    """Parse a predictions CSV file into an ordered ip -> (lat, lon) mapping.

    Coordinates are not range-checked: unbounded decoders may predict outside the globe.
    """
    predictions: Dict[str, Tuple[float, float]] = {}
    for rowno, ip, lat, lon in _iter_coordinate_rows(stream):
        if ip in predictions:
            raise DuplicateError(f"row {rowno}: duplicate prediction for {ip}", {"ip": ip})
        predictions[ip] = (lat, lon)
    return predictions


def serialize_predictions(predictions: Dict[str, Tuple[float, float]]) -> bytes:
    return serialize_coordinates((ip, lat, lon) for ip, (lat, lon) in predictions.items())


def read_file(path: Union[str, Path], parser, **kwargs):
    """Open ``path`` in binary mode and run ``parser`` over it, tagging data errors with the file name."""
    path = Path(path)
    with open(path, "rb") as f:
        try:
            return parser(f, **kwargs)
        except DataError as e:
            e.details.setdefault("file", str(path))
            e.message = f"{path}: {e.message}"
            e.args = (e.message,)
            raise


def write_file(path: Union[str, Path], data: bytes) -> Path:
    path = Path(path)
    path.write_bytes(data)
    logger.debug("File written", path=str(path), size=len(data))
    return path


def parse_ip_list(stream: Stream) -> List[str]:
    """Parse a target list: one IPv4 address per line, ``#`` comments and an optional ``ip`` header allowed."""
    ips: List[str] = []
    seen = set()
    for lineno, raw in enumerate(_read_text(stream).split("\n"), start=1):
        line = raw.split("#", 1)[0].strip().split(",", 1)[0].strip()
        if not line or (lineno == 1 and line == "ip"):
            continue
        try:
            ip = validate_ipv4(line)
        except RecordValidationError as e:
            raise RecordValidationError(e.message, line=lineno)
        if ip in seen:
            raise DuplicateError(f"line {lineno}: duplicate target ip {ip}", {"ip": ip})
        seen.add(ip)
        ips.append(ip)
    return ips
