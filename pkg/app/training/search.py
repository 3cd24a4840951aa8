"""
Hyperparameter grid search, decoder comparison and repeated evaluation.
"""

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config import ModelConfig, SplitSpec, TrainConfig
from app.evaluation.metrics import ErrorStats, error_stats
from app.measurement.models import LandmarkRecord
from app.training.split import split
from app.training.trainer import TrainReport, predict_coordinates, train, training_labels
from app.utils.exceptions import ConfigurationError
from app.utils.logging import PipelineLogger

MODEL_KEYS = {"G": "node_dim", "K": "edge_dim", "L": "num_layers", "aggregator": "aggregator",
              "edge_hidden": "edge_hidden", "decoder": "decoder"}
TRAIN_KEYS = {"lr": "lr", "weight_decay": "weight_decay", "lambda": "weight_decay"}

DECODER_VARIANTS: Tuple[Tuple[str, str, bool], ...] = (
    ("original_vanilla", "vanilla", False),
    ("original_vanilla_bn", "vanilla_bn", False),
    ("vanilla", "vanilla", True),
    ("vanilla_bn", "vanilla_bn", True),
    ("sigmoid", "sigmoid", True),
    ("bn_sigmoid", "bn_sigmoid", True),
)


def derive_seed(base: int, index: int) -> int:
    """Independent per-run seed from a base seed and a run index."""
    return int(np.random.SeedSequence([base, index]).generate_state(1, dtype=np.uint32)[0])


def _config_key(config: TrainConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), sort_keys=True)


def grid_cells(base: TrainConfig, grid: Dict[str, Sequence[Any]]) -> List[TrainConfig]:
    """Expand a grid into one TrainConfig per combination, each with a derived seed."""
    unknown = sorted(set(grid) - set(MODEL_KEYS) - set(TRAIN_KEYS))
    if unknown:
        raise ConfigurationError(f"unknown grid keys: {', '.join(unknown)}")
    if not grid or any(len(values) == 0 for values in grid.values()):
        raise ConfigurationError("grid must name at least one value per key")

    keys = list(grid)
    cells = []
    for index, combo in enumerate(itertools.product(*(grid[k] for k in keys))):
        seed = derive_seed(base.seed, index)
        model_values = base.model.model_dump()
        train_values = base.model_dump(exclude={"model"})
        for key, value in zip(keys, combo):
            if key in MODEL_KEYS:
                model_values[MODEL_KEYS[key]] = value
            else:
                train_values[TRAIN_KEYS[key]] = value
        model_values["seed"] = seed
        train_values["seed"] = seed
        try:
            cells.append(TrainConfig(**train_values, model=ModelConfig(**model_values)))
        except ValueError as e:
            raise ConfigurationError(f"invalid grid cell {dict(zip(keys, combo))}: {e}")
    return cells


@dataclass
class GridResult:
    best: TrainConfig
    best_report: TrainReport
    reports: List[TrainReport] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "best": self.best.model_dump(mode="json"),
            "best_val_error_km": self.best_report.best_val_error_km,
            "cells": [r.summary() for r in self.reports],
        }


def grid_search(graph, labels, val_labels, base: TrainConfig, grid: Dict[str, Sequence[Any]],
                workers: int = 1) -> GridResult:
    """
    Train every grid cell and keep the one with the lowest validation error.

    Ties go to the cell with fewer epochs to its best validation error, then to
    the lexicographically smaller config.

    Args:
        graph: AttributedGraph
        labels: training labels (ip -> coordinate)
        val_labels: validation labels
        base: configuration the grid values override
        grid: key -> candidate values (G, K, L, aggregator, edge_hidden, decoder, lr, weight_decay)
        workers: thread pool size; 1 trains sequentially

    Returns:
        GridResult with per-cell reports in grid order
    """
    cells = grid_cells(base, grid)
    log = PipelineLogger("grid_search")
    log.log_stage_start(cells=len(cells), workers=workers)
    graph.message_index()

    def run(indexed: Tuple[int, TrainConfig]) -> TrainReport:
        index, config = indexed
        return train(graph, labels, val_labels, config, run_id=f"grid-{index}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run, enumerate(cells)))
    else:
        reports = [run(item) for item in enumerate(cells)]

    best = min(reports, key=lambda r: (r.best_val_error_km, r.best_epoch, _config_key(r.config)))
    log.log_stage_complete(best_val_error_km=best.best_val_error_km)
    return GridResult(best=best.config, best_report=best, reports=reports)


@dataclass(frozen=True)
class AblationRow:
    variant: str
    decoder: str
    rule_based: bool
    best_val_error_km: float
    best_epoch: int
    stop_reason: str


def decoder_ablation(graph, labels, val_labels, base: TrainConfig, max_epochs: int = 10000,
                     patience: int = 1000, variants: Optional[Sequence[str]] = None) -> List[AblationRow]:
    """Train each decoder variant (original and range-ruled) under otherwise identical settings."""
    rows = []
    for name, decoder, rule_based in DECODER_VARIANTS:
        if variants is not None and name not in variants:
            continue
        model = base.model.model_copy(update={"decoder": decoder})
        config = base.model_copy(update={
            "model": model, "rule_based": rule_based,
            "max_epochs": max_epochs, "patience": min(patience, max_epochs),
        })
        report = train(graph, labels, val_labels, config, run_id=f"ablation-{name}")
        rows.append(AblationRow(name, decoder, rule_based, report.best_val_error_km,
                                report.best_epoch, report.stop_reason))
    return rows


@dataclass
class RepeatedResult:
    runs: List[ErrorStats]

    @property
    def mean(self) -> Dict[str, float]:
        return {
            "average_km": float(np.mean([r.average_km for r in self.runs])),
            "median_km": float(np.mean([r.median_km for r in self.runs])),
            "max_km": float(np.mean([r.max_km for r in self.runs])),
        }

    def to_json(self) -> bytes:
        data = {
            "repeats": len(self.runs),
            "mean": self.mean,
            "runs": [{"average_km": r.average_km, "median_km": r.median_km, "max_km": r.max_km, "n": r.n}
                     for r in self.runs],
        }
        return (json.dumps(data, indent=2) + "\n").encode("utf-8")


def repeated_evaluation(graph, landmarks: Sequence[LandmarkRecord], config: TrainConfig,
                        spec: SplitSpec, repeats: int = 5) -> RepeatedResult:
    """Re-split, retrain and test ``repeats`` times with derived seeds; statistics are averaged."""
    runs = []
    for r in range(repeats):
        seed = derive_seed(spec.seed, r)
        parts = split(landmarks, spec.model_copy(update={"seed": seed}))
        run_config = config.model_copy(update={
            "seed": seed, "model": config.model.model_copy(update={"seed": seed}),
        })
        report = train(graph, training_labels(graph, parts.train), {lm.ip: lm.coord for lm in parts.val},
                       run_config, run_id=f"repeat-{r}")
        predicted = predict_coordinates(graph, report.params, report.scaler, [lm.ip for lm in parts.test])
        runs.append(error_stats(list(predicted.values()), [lm.coord for lm in parts.test]))
    return RepeatedResult(runs)
