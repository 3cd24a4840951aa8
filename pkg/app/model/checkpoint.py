"""
Versioned model checkpoints.

A checkpoint is an ``.npz`` archive holding every trainable array under its
parameter name, the batch-norm running statistics and a JSON ``__meta__``
entry with the model config and the coordinate scaler.
"""

import json
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from app.model.params import BN_BETA, BN_GAMMA, ModelConfig, ModelParams
from app.numeric.tensor import BatchNormState
from app.training.scaler import GeoScaler
from app.utils.exceptions import DataError

CHECKPOINT_VERSION = 1
META_KEY = "__meta__"
BN_PREFIX = "__bn__."


def save_checkpoint(params: ModelParams, scaler: GeoScaler, path: Union[str, Path]) -> Path:
    """Write ``params`` and ``scaler``; loading returns bitwise-identical arrays."""
    path = Path(path)
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": params.config.model_dump(mode="json"),
        "scaler": scaler.to_dict(),
        "bn": None,
    }
    arrays = dict(params.weights)
    if params.bn is not None:
        meta["bn"] = {"momentum": params.bn.momentum, "eps": params.bn.eps}
        arrays[BN_PREFIX + "running_mean"] = params.bn.running_mean
        arrays[BN_PREFIX + "running_var"] = params.bn.running_var
    arrays[META_KEY] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[ModelParams, GeoScaler]:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    path = Path(path)
    try:
        archive = np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise
    except (ValueError, OSError) as e:
        raise DataError(f"{path}: not a model checkpoint ({e})")

    with archive:
        if META_KEY not in archive.files:
            raise DataError(f"{path}: checkpoint metadata missing")
        meta = json.loads(str(archive[META_KEY]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        config = ModelConfig(**meta["config"])
        weights = {
            name: archive[name].copy()
            for name in archive.files
            if name != META_KEY and not name.startswith(BN_PREFIX)
        }
        bn = None
        if meta["bn"] is not None:
            bn = BatchNormState(
                gamma=weights[BN_GAMMA],
                beta=weights[BN_BETA],
                running_mean=archive[BN_PREFIX + "running_mean"].copy(),
                running_var=archive[BN_PREFIX + "running_var"].copy(),
                momentum=meta["bn"]["momentum"],
                eps=meta["bn"]["eps"],
                training=False,
            )
    params = ModelParams(config=config, bn=bn).with_weights(weights)
    return params, GeoScaler.from_dict(meta["scaler"])
