"""
Full-batch training with early stopping on validation error distance.

The objective is the summed squared error of the labeled training nodes' scaled
coordinates plus ``weight_decay * ||Theta||^2``. After every update the model is
evaluated in eval mode on the validation landmarks; the parameters of the best
validation epoch are returned.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config import TrainConfig
from app.evaluation.metrics import error_distances
from app.measurement.models import LandmarkRecord
from app.model.gnn import forward, predict
from app.model.params import ModelParams, init_params
from app.numeric.optim import AdamState, adam_step
from app.numeric.tensor import Tape, gather_rows, mse_loss
from app.training.scaler import GeoScaler, fit_scaler
from app.utils.exceptions import DivergenceError, InsufficientDataError, NonFiniteError
from app.utils.logging import PipelineLogger, TrainingLogger

__all__ = [
    "TrainConfig", "TrainReport", "EpochRecord", "training_labels", "compute_gradients",
    "objective", "train", "predict_coordinates", "validation_error",
]

Coordinate = Tuple[float, float]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_error_km: float


@dataclass
class TrainReport:
    """Outcome of one training run; ``params`` are those of the best validation epoch."""

    config: TrainConfig
    params: ModelParams
    scaler: GeoScaler
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_error_km: float = float("inf")
    stop_reason: str = "max_epochs"

    @property
    def epochs(self) -> int:
        return len(self.history)

    def summary(self) -> Dict:
        return {
            "config": self.config.model_dump(mode="json"),
            "best_epoch": self.best_epoch,
            "best_val_error_km": self.best_val_error_km,
            "stop_reason": self.stop_reason,
            "epochs": self.epochs,
        }

    def to_dict(self) -> Dict:
        data = self.summary()
        data["history"] = [
            {"epoch": r.epoch, "train_loss": r.train_loss, "val_error_km": r.val_error_km}
            for r in self.history
        ]
        return data

    def to_json(self) -> bytes:
        return (json.dumps(self.to_dict(), indent=2) + "\n").encode("utf-8")


def training_labels(graph, train_landmarks: Sequence[LandmarkRecord]) -> Dict[str, Coordinate]:
    """Training labels: the probing host (when its location is known) plus the training landmarks."""
    labels: Dict[str, Coordinate] = {}
    if graph.probe_location is not None:
        labels[graph.probe_ip] = tuple(graph.probe_location)
    for lm in train_landmarks:
        labels[lm.ip] = lm.coord
    return labels


def _label_arrays(graph, labels: Dict[str, Coordinate]) -> Tuple[np.ndarray, np.ndarray]:
    ids = np.array([graph.node_id(ip) for ip in labels], dtype=np.int64)
    coords = np.array(list(labels.values()), dtype=np.float64).reshape(-1, 2)
    return ids, coords


def compute_gradients(graph, params: ModelParams, train_ids: np.ndarray, targets_scaled: np.ndarray,
                      update_stats: bool = True) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Data loss and its gradient for every parameter.

    Only the rows in ``train_ids`` enter the loss, so labels of other nodes cannot
    influence any gradient.

    Returns:
        (summed squared error, name -> gradient)
    """
    tape = Tape()
    out = forward(graph, params, mode="train", tape=tape, update_stats=update_stats)
    loss = mse_loss(gather_rows(out, train_ids), targets_scaled)
    return loss.item(), tape.backward(loss)


def objective(graph, params: ModelParams, train_ids: np.ndarray, targets_scaled: np.ndarray,
              weight_decay: float) -> float:
    """Regularized training objective at ``params`` (train-mode forward, running stats untouched)."""
    out = forward(graph, params, mode="train", update_stats=False)
    loss = mse_loss(gather_rows(out, train_ids), targets_scaled).item()
    return loss + weight_decay * params.l2_penalty()


def validation_error(graph, params: ModelParams, scaler: GeoScaler, ids: np.ndarray,
                     truth: np.ndarray) -> float:
    """Average haversine error (km) of eval-mode predictions for ``ids``."""
    coords = scaler.inverse(predict(graph, params)[ids])
    return float(np.mean(error_distances(coords, truth)))


def train(graph, labels: Dict[str, Coordinate], val_labels: Dict[str, Coordinate], config: TrainConfig,
          scaler: Optional[GeoScaler] = None, run_id: str = "train") -> TrainReport:
    """
    Train the model on ``graph``.

    Args:
        graph: AttributedGraph holding every labeled and unlabeled node
        labels: ip -> coordinate for the probing host and training landmarks
        val_labels: ip -> coordinate for validation landmarks
        config: training configuration including the model config
        scaler: coordinate scaler; fitted on ``labels`` (or the identity when
            ``config.rule_based`` is off) if not given
        run_id: identifier attached to log lines

    Returns:
        TrainReport with the best validation epoch's parameters
    """
    if not labels:
        raise InsufficientDataError("training needs at least one labeled node")
    if not val_labels:
        raise InsufficientDataError("training needs at least one validation landmark")

    log = TrainingLogger(run_id, config.model.decoder)
    if scaler is None:
        scaler = fit_scaler(list(labels.values())) if config.rule_based else GeoScaler.identity()

    train_ids, train_coords = _label_arrays(graph, labels)
    val_ids, val_coords = _label_arrays(graph, val_labels)
    targets = scaler.transform(train_coords)

    params = init_params(config.model, graph)
    decay = params.regularized_names()
    state = AdamState()
    frozen = config.lr == 0
    report = TrainReport(config=config, params=params.copy(), scaler=scaler)
    log.log_run_start(graph.n_nodes, graph.n_edges, len(train_ids), len(val_ids))

    for epoch in range(1, config.max_epochs + 1):
        try:
            data_loss, grads = compute_gradients(graph, params, train_ids, targets, update_stats=not frozen)
            loss = data_loss + config.weight_decay * params.l2_penalty(decay)
            if not np.isfinite(loss):
                raise NonFiniteError("loss is not finite")
            if not frozen:
                params.with_weights(adam_step(params.weights, grads, state, config.lr, config.weight_decay, decay))
            val_error = validation_error(graph, params, scaler, val_ids, val_coords)
        except NonFiniteError as e:
            log.log_divergence(epoch, float("nan"))
            raise DivergenceError(f"training diverged: {e.message}", epoch=epoch)

        report.history.append(EpochRecord(epoch, loss, val_error))
        log.log_epoch(epoch, loss, val_error, every=config.log_every)

        if val_error < report.best_val_error_km:
            report.best_val_error_km = val_error
            report.best_epoch = epoch
            report.params = params.copy()
        elif epoch - report.best_epoch >= config.patience:
            report.stop_reason = "early_stop"
            break

    log.log_run_complete(report.best_epoch, report.best_val_error_km, report.stop_reason, report.epochs)
    return report


def predict_coordinates(graph, params: ModelParams, scaler: GeoScaler,
                        ips: Optional[Sequence[str]] = None) -> Dict[str, Coordinate]:
    """
    Eval-mode coordinates for the requested nodes (all nodes by default).

    Returns:
        ip -> (lat, lon) in request order
    """
    ips = [node.ip for node in graph.nodes] if ips is None else list(ips)
    ids = np.array([graph.node_id(ip) for ip in ips], dtype=np.int64)
    scaled = predict(graph, params)[ids] if len(ids) else np.zeros((0, 2))
    PipelineLogger("geolocate").log_out_of_box(int(scaler.outside(scaled).sum()))
    coords = scaler.inverse(scaled)
    return {ip: (float(lat), float(lon)) for ip, (lat, lon) in zip(ips, coords)}
