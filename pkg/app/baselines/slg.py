"""
Shortest-relative-delay geolocation (SLG) and its correlation-grouped variant.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.baselines.paths import PathIndex, relative_delay
from app.evaluation.metrics import error_distances, haversine_km
from app.measurement.models import LandmarkRecord
from app.utils.exceptions import InsufficientDataError
from app.utils.logging import PipelineLogger

Coordinate = Tuple[float, float]

CA_GRID = tuple(round(0.1 * i, 1) for i in range(10))
CB_GRID = tuple(round(-0.1 * i, 1) for i in range(1, 11))


def _nearest(target: str, landmarks: Sequence[LandmarkRecord], index: PathIndex) -> LandmarkRecord:
    """Argmin of relative delay over the landmarks other than ``target`` itself (all of them if none remain)."""
    candidates = [lm for lm in landmarks if lm.ip != target] or list(landmarks)
    if not candidates:
        raise InsufficientDataError("SLG needs at least one landmark")
    return min(candidates, key=lambda lm: (relative_delay(target, lm.ip, index), lm.ip))


def slg_geolocate(target: str, landmarks: Sequence[LandmarkRecord], index: PathIndex) -> Coordinate:
    """
    Location of the landmark with the smallest relative delay to ``target``.

    Ties go to the lexicographically lower landmark ip; the target itself is never
    its own reference.
    """
    return _nearest(target, landmarks, index).coord


@dataclass
class CorrGroups:
    """Per-landmark Pearson correlation between relative delay and distance to the other landmarks."""

    landmarks: List[LandmarkRecord]
    correlations: Dict[str, float]

    @classmethod
    def compute(cls, landmarks: Sequence[LandmarkRecord], index: PathIndex) -> "CorrGroups":
        landmarks = list(landmarks)
        coords = np.array([lm.coord for lm in landmarks], dtype=np.float64).reshape(-1, 2)
        correlations = {}
        for i, lm in enumerate(landmarks):
            others = [j for j in range(len(landmarks)) if j != i]
            if len(others) < 2:
                correlations[lm.ip] = 0.0
                continue
            delays = np.array([relative_delay(lm.ip, landmarks[j].ip, index) for j in others])
            distances = haversine_km(coords[i, 0], coords[i, 1], coords[others, 0], coords[others, 1])
            if np.std(delays) == 0.0 or np.std(distances) == 0.0:
                correlations[lm.ip] = 0.0
            else:
                correlations[lm.ip] = float(np.corrcoef(delays, distances)[0, 1])
        return cls(landmarks, correlations)

    def group_of(self, ip: str, ca: float, cb: float) -> str:
        c = self.correlations[ip]
        if c > ca:
            return "A"
        if c < cb:
            return "B"
        return "C"

    def assign(self, ca: float, cb: float) -> Dict[str, List[LandmarkRecord]]:
        """Partition the landmarks into groups A, B and C."""
        groups: Dict[str, List[LandmarkRecord]] = {"A": [], "B": [], "C": []}
        for lm in self.landmarks:
            groups[self.group_of(lm.ip, ca, cb)].append(lm)
        return groups


def corr_slg_geolocate(targets: Sequence[str], landmarks: Sequence[LandmarkRecord], index: PathIndex,
                       ca: float, cb: float, groups: Optional[CorrGroups] = None) -> Dict[str, Coordinate]:
    """
    Correlation-grouped SLG.

    A target takes the group of its minimum-relative-delay landmark. Group A maps
    it with the SLG rule inside A, group B to the B landmark with the largest
    relative delay, group C to the centroid of the C landmarks. An empty group
    falls back to plain SLG.

    Args:
        targets: target ips
        landmarks: reference landmarks
        index: routing-path index
        ca: group A threshold (correlation > ca)
        cb: group B threshold (correlation < cb)
        groups: precomputed correlations for ``landmarks``

    Returns:
        ip -> (lat, lon) in target order
    """
    groups = groups or CorrGroups.compute(landmarks, index)
    members = groups.assign(ca, cb)
    result: Dict[str, Coordinate] = {}
    for target in targets:
        nearest = _nearest(target, landmarks, index)
        group = groups.group_of(nearest.ip, ca, cb)
        chosen = [lm for lm in members[group] if lm.ip != target]
        if not chosen:
            result[target] = nearest.coord
        elif group == "A":
            result[target] = _nearest(target, chosen, index).coord
        elif group == "B":
            result[target] = _farthest(target, chosen, index).coord
        else:
            coords = np.array([lm.coord for lm in chosen])
            result[target] = (float(coords[:, 0].mean()), float(coords[:, 1].mean()))
    return result


def _farthest(target: str, landmarks: Sequence[LandmarkRecord], index: PathIndex) -> LandmarkRecord:
    """Landmark with the largest relative delay; the lower ip wins ties."""
    best, best_delay = None, None
    for lm in sorted(landmarks, key=lambda lm: lm.ip):
        delay = relative_delay(target, lm.ip, index)
        if best is None or delay > best_delay:
            best, best_delay = lm, delay
    return best


def _average_error(predicted: Dict[str, Coordinate], truth: Sequence[LandmarkRecord]) -> float:
    return float(np.mean(error_distances([predicted[lm.ip] for lm in truth], [lm.coord for lm in truth])))


def tune_corr_slg(train: Sequence[LandmarkRecord], val: Sequence[LandmarkRecord],
                  index: PathIndex) -> Tuple[float, float, float]:
    """
    Pick (C_a, C_b) minimizing validation average error with the training landmarks as reference.

    Returns:
        (ca, cb, validation average error km); the first grid point wins ties
    """
    if not val:
        raise InsufficientDataError("Corr-SLG tuning needs validation landmarks")
    log = PipelineLogger("tune_corr_slg")
    groups = CorrGroups.compute(train, index)
    targets = [lm.ip for lm in val]
    best: Optional[Tuple[float, float, float]] = None
    for ca in CA_GRID:
        for cb in CB_GRID:
            error = _average_error(corr_slg_geolocate(targets, train, index, ca, cb, groups), val)
            if best is None or error < best[2]:
                best = (ca, cb, error)
    log.log_stage_complete(ca=best[0], cb=best[1], val_error_km=best[2])
    return best
