"""
Min-max coordinate scaling between degrees and the unit box.
"""

from dataclasses import asdict, dataclass
from typing import Dict, Sequence

import numpy as np

from app.utils.exceptions import InsufficientDataError

MARGIN_DEG = 0.1


@dataclass(frozen=True)
class GeoScaler:
    """Per-dimension min-max transform; ``bounded`` is False for the identity used by original decoders."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    bounded: bool = True

    @classmethod
    def identity(cls) -> "GeoScaler":
        return cls(0.0, 1.0, 0.0, 1.0, bounded=False)

    @property
    def _mins(self) -> np.ndarray:
        return np.array([self.lat_min, self.lon_min])

    @property
    def _spans(self) -> np.ndarray:
        return np.array([self.lat_max - self.lat_min, self.lon_max - self.lon_min])

    def transform(self, coords) -> np.ndarray:
        """Degrees to scaled values; out-of-box inputs map outside [0, 1] unclamped."""
        coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
        return (coords - self._mins) / self._spans

    def inverse(self, scaled) -> np.ndarray:
        scaled = np.asarray(scaled, dtype=np.float64).reshape(-1, 2)
        return scaled * self._spans + self._mins

    def outside(self, scaled) -> np.ndarray:
        """Rows with a scaled value outside [0, 1]; always False when unbounded."""
        scaled = np.asarray(scaled, dtype=np.float64).reshape(-1, 2)
        if not self.bounded:
            return np.zeros(scaled.shape[0], dtype=bool)
        return np.any((scaled < 0.0) | (scaled > 1.0), axis=1)

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "GeoScaler":
        return cls(**data)


def fit_scaler(train_coords: Sequence, margin: float = MARGIN_DEG) -> GeoScaler:
    """
    Fit a scaler on training coordinates, extending each end by ``margin`` degrees.

    Args:
        train_coords: (lat, lon) rows of the training landmarks
        margin: extension in decimal degrees

    Returns:
        GeoScaler under which every training coordinate lies strictly inside (0, 1)
    """
    coords = np.asarray(train_coords, dtype=np.float64).reshape(-1, 2)
    if len(np.unique(coords, axis=0)) < 2:
        raise InsufficientDataError("scaler fitting needs at least 2 distinct training coordinates")
    lo = coords.min(axis=0) - margin
    hi = coords.max(axis=0) + margin
    return GeoScaler(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))
