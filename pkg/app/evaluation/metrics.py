"""
Geodesic error computation, summary metrics and CDF export.
"""

import csv
import io
import json
from dataclasses import dataclass, asdict
from typing import List, Sequence, Tuple, Union

import numpy as np

from app.utils.exceptions import InsufficientDataError, LengthMismatchError

EARTH_RADIUS_KM = 6371.0

Coordinate = Tuple[float, float]


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in km between points given in decimal degrees (numpy-broadcasting)."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(v, dtype=np.float64)) for v in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def haversine(a: Union[Coordinate, np.ndarray], b: Union[Coordinate, np.ndarray]):
    """
    Great-circle distance on a 6371.0 km sphere.

    Args:
        a: (lat, lon) or an array of shape (n, 2)
        b: (lat, lon) or an array of shape (n, 2)

    Returns:
        Distance in km (float for single coordinates, array otherwise)
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = haversine_km(a[..., 0], a[..., 1], b[..., 0], b[..., 1])
    return float(d) if np.ndim(d) == 0 else d


@dataclass(frozen=True)
class ErrorStats:
    """Average / median / max error distance over n predictions."""
    average_km: float
    median_km: float
    max_km: float
    n: int

    def to_json(self) -> bytes:
        return (json.dumps(asdict(self), indent=2) + "\n").encode("utf-8")


@dataclass(frozen=True)
class CdfSeries:
    """Sorted (error_km, cumulative_fraction) points ending at exactly 1.0."""
    points: Tuple[Tuple[float, float], ...]

    def to_csv(self) -> bytes:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["error_km", "cumulative_fraction"])
        for error, fraction in self.points:
            writer.writerow([repr(float(error)), repr(float(fraction))])
        return buffer.getvalue().encode("utf-8")


def error_distances(pred: Sequence[Coordinate], truth: Sequence[Coordinate]) -> np.ndarray:
    """Per-pair haversine errors in km."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1, 2)
    if len(pred) != len(truth):
        raise LengthMismatchError(f"{len(pred)} predictions for {len(truth)} ground-truth coordinates")
    return np.atleast_1d(haversine_km(pred[:, 0], pred[:, 1], truth[:, 0], truth[:, 1]))


def summarize_errors(errors: Sequence[float]) -> ErrorStats:
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise InsufficientDataError("error statistics need at least one prediction")
    return ErrorStats(
        average_km=float(np.mean(errors)),
        median_km=float(np.median(errors)),
        max_km=float(np.max(errors)),
        n=int(errors.size),
    )


def error_stats(pred: Sequence[Coordinate], truth: Sequence[Coordinate]) -> ErrorStats:
    """
    Summary error statistics of paired predictions.

    Args:
        pred: predicted coordinates
        truth: ground-truth coordinates, same length and order

    Returns:
        ErrorStats with even-n median defined as the mean of the two middle errors
    """
    return summarize_errors(error_distances(pred, truth))


def cdf(errors: Sequence[float]) -> CdfSeries:
    """Empirical CDF of error distances; duplicate errors keep the highest fraction."""
    values = np.sort(np.asarray(errors, dtype=np.float64))
    n = values.size
    if n == 0:
        raise InsufficientDataError("CDF needs at least one error")
    points: List[Tuple[float, float]] = []
    for i, value in enumerate(values, start=1):
        fraction = 1.0 if i == n else i / n
        if points and points[-1][0] == value:
            points[-1] = (float(value), fraction)
        else:
            points.append((float(value), fraction))
    return CdfSeries(tuple(points))
