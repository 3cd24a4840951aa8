"""
Seeded train/validation/test landmark splits.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np

from app.config import SplitSpec
from app.measurement.models import LandmarkRecord
from app.utils.exceptions import DataError, InsufficientDataError

__all__ = ["SplitSpec", "LandmarkSplits", "split", "MIN_LANDMARKS"]

MIN_LANDMARKS = 10


@dataclass(frozen=True)
class LandmarkSplits:
    train: List[LandmarkRecord]
    val: List[LandmarkRecord]
    test: List[LandmarkRecord]

    def ips(self) -> Dict[str, List[str]]:
        return {
            "train": [lm.ip for lm in self.train],
            "val": [lm.ip for lm in self.val],
            "test": [lm.ip for lm in self.test],
        }

    def to_json(self) -> bytes:
        return (json.dumps(self.ips(), indent=2) + "\n").encode("utf-8")

    @classmethod
    def from_json(cls, data: Union[str, bytes], landmarks: Sequence[LandmarkRecord]) -> "LandmarkSplits":
        """Rebuild splits from a splits file against the landmark records."""
        by_ip = {lm.ip: lm for lm in landmarks}
        ips = json.loads(data)
        missing = sorted(ip for part in ("train", "val", "test") for ip in ips.get(part, []) if ip not in by_ip)
        if missing:
            raise DataError(f"splits reference unknown landmarks: {', '.join(missing)}", {"ips": missing})
        return cls(*([by_ip[ip] for ip in ips.get(part, [])] for part in ("train", "val", "test")))

    @classmethod
    def read(cls, path: Union[str, Path], landmarks: Sequence[LandmarkRecord]) -> "LandmarkSplits":
        return cls.from_json(Path(path).read_bytes(), landmarks)


def split(landmarks: Sequence[LandmarkRecord], spec: SplitSpec) -> LandmarkSplits:
    """
    Shuffle with ``spec.seed`` and partition: floor for train and validation, the rest to test.

    Args:
        landmarks: at least 10 landmark records
        spec: fractions and seed

    Returns:
        Disjoint LandmarkSplits covering every landmark
    """
    if len(landmarks) < MIN_LANDMARKS:
        raise InsufficientDataError(
            f"splitting needs at least {MIN_LANDMARKS} landmarks, got {len(landmarks)}"
        )
    order = np.random.default_rng(spec.seed).permutation(len(landmarks))
    n_train = math.floor(spec.train * len(landmarks) + 1e-9)
    n_val = math.floor(spec.val * len(landmarks) + 1e-9)
    shuffled = [landmarks[i] for i in order]
    return LandmarkSplits(
        train=shuffled[:n_train],
        val=shuffled[n_train:n_train + n_val],
        test=shuffled[n_train + n_val:],
    )
