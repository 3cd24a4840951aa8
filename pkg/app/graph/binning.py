"""
One-dimensional k-means delay binning.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from app.utils.exceptions import InsufficientDataError

DEFAULT_BINS = 10
MAX_ITERATIONS = 300
TOLERANCE = 1e-9


@dataclass(frozen=True)
class BinModel:
    """Sorted cluster centers; a value belongs to its nearest center, ties to the lower index."""

    centers: Tuple[float, ...]

    @property
    def k(self) -> int:
        return len(self.centers)

    def assign(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        centers = np.asarray(self.centers, dtype=np.float64)
        # argmin returns the first minimum, i.e. the lower index on ties
        return np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)

    def one_hot(self, values) -> np.ndarray:
        bins = self.assign(values)
        out = np.zeros((bins.size, self.k), dtype=np.float64)
        out[np.arange(bins.size), bins] = 1.0
        return out


def _plus_plus_init(values: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [values[int(rng.integers(values.size))]]
    for _ in range(1, k):
        d2 = np.min((values[:, None] - np.asarray(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0.0:
            # fewer distinct values than clusters: surplus centers collapse
            centers.append(centers[-1])
            continue
        centers.append(values[int(rng.choice(values.size, p=d2 / total))])
    return np.asarray(centers, dtype=np.float64)


def kmeans_bin(values: Sequence[float], k: int = DEFAULT_BINS, seed: int = 0) -> BinModel:
    """
    Cluster scalar values with Lloyd's algorithm and k-means++ seeding.

    Args:
        values: non-empty sequence of delays
        k: number of bins
        seed: seed of the k-means++ draw

    Returns:
        BinModel with sorted centers
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise InsufficientDataError("k-means binning needs at least one value")
    rng = np.random.default_rng(seed)
    centers = np.sort(_plus_plus_init(values, k, rng))

    for _ in range(MAX_ITERATIONS):
        labels = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
        updated = centers.copy()
        for j in range(k):
            members = values[labels == j]
            if members.size:
                updated[j] = members.mean()
        updated = np.sort(updated)
        moved = np.max(np.abs(updated - centers))
        centers = updated
        if moved < TOLERANCE:
            break
    return BinModel(tuple(float(c) for c in centers))
