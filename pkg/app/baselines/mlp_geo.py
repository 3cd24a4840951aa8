"""
Multi-layer perceptron baseline over probe delay and on-path routers.

Input per ip: ``[delay] + router slots`` where every router on the ip's routing
path holds ``beta`` and all other slots hold 0. Three dense layers map it to
scaled coordinates, trained with summed squared error and Adam.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.baselines.paths import PathIndex
from app.config import BaselineConfig
from app.evaluation.metrics import error_distances
from app.numeric.optim import AdamState, adam_step
from app.numeric.tensor import Tape, Tensor, affine, mse_loss, relu
from app.training.scaler import GeoScaler, fit_scaler
from app.utils.exceptions import DivergenceError, InsufficientDataError, NonFiniteError
from app.utils.logging import PipelineLogger, TrainingLogger

Coordinate = Tuple[float, float]

LR_GRID = (0.1, 0.01, 0.001, 0.0001)
HIDDEN_GRID = (32, 64, 128, 256)
LAYERS = (("w1", "b1"), ("w2", "b2"), ("w3", "b3"))


@dataclass
class MlpGeoModel:
    """Three dense layers with the router slot order and scaler they were trained with."""

    weights: Dict[str, np.ndarray]
    routers: Tuple[str, ...]
    beta: float
    scaler: GeoScaler
    hidden: int
    lr: float
    best_epoch: int = 0
    best_val_error_km: Optional[float] = None
    history: List[float] = field(default_factory=list)


def encode_inputs(ips: Sequence[str], index: PathIndex, beta: float,
                  routers: Optional[Sequence[str]] = None) -> np.ndarray:
    """Input matrix: one row per ip, delay first, then one slot per router."""
    routers = tuple(index.routers if routers is None else routers)
    slot = {ip: i for i, ip in enumerate(routers)}
    x = np.zeros((len(ips), 1 + len(routers)))
    for row, ip in enumerate(ips):
        x[row, 0] = index.delay(ip)
        for hop in index.path_of(ip):
            if hop in slot:
                x[row, 1 + slot[hop]] = beta
    return x


def _init(n_in: int, hidden: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    weights = {}
    for (w, b), (fan_in, fan_out) in zip(LAYERS, ((n_in, hidden), (hidden, hidden), (hidden, 2))):
        bound = 1.0 / np.sqrt(fan_in)
        weights[w] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        weights[b] = np.zeros(fan_out)
    return weights


def mlp_forward(weights: Dict[str, np.ndarray], x: np.ndarray, tape: Optional[Tape] = None) -> Tensor:
    theta = {k: (tape.watch(v, k) if tape else Tensor(v)) for k, v in weights.items()}
    h = relu(affine(x, theta["w1"], theta["b1"]))
    h = relu(affine(h, theta["w2"], theta["b2"]))
    return affine(h, theta["w3"], theta["b3"])


def mlp_geo_train(index: PathIndex, labels: Dict[str, Coordinate], config: BaselineConfig,
                  val_labels: Optional[Dict[str, Coordinate]] = None,
                  scaler: Optional[GeoScaler] = None) -> MlpGeoModel:
    """
    Train the MLP baseline.

    With validation labels the weights of the epoch with the lowest validation
    average error are kept; otherwise the final weights are.

    Args:
        index: routing-path index (inputs and router slots)
        labels: ip -> coordinate of the training landmarks
        config: hidden width, learning rate, epochs, beta and seed
        val_labels: optional validation landmarks
        scaler: shared coordinate scaler; fitted on ``labels`` when omitted

    Returns:
        Trained MlpGeoModel
    """
    if not labels:
        raise InsufficientDataError("MLP-Geo needs training landmarks")
    log = TrainingLogger(f"mlp-geo-h{config.mlp_hidden}-lr{config.mlp_lr}", "mlp")
    scaler = scaler or fit_scaler(list(labels.values()))
    x = encode_inputs(list(labels), index, config.beta)
    y = scaler.transform(list(labels.values()))
    if val_labels:
        x_val = encode_inputs(list(val_labels), index, config.beta)
        truth_val = np.array(list(val_labels.values()), dtype=np.float64)

    weights = _init(x.shape[1], config.mlp_hidden, np.random.default_rng(config.seed))
    model = MlpGeoModel(weights, tuple(index.routers), config.beta, scaler, config.mlp_hidden, config.mlp_lr)
    state = AdamState()
    for epoch in range(1, config.mlp_epochs + 1):
        try:
            tape = Tape()
            loss = mse_loss(mlp_forward(weights, x, tape), y)
            grads = tape.backward(loss)
            weights = adam_step(weights, grads, state, config.mlp_lr)
            if val_labels:
                predicted = scaler.inverse(mlp_forward(weights, x_val).value)
                error = float(np.mean(error_distances(predicted, truth_val)))
        except NonFiniteError as e:
            log.log_divergence(epoch, float("nan"))
            raise DivergenceError(f"MLP-Geo training diverged: {e.message}", epoch=epoch)

        model.history.append(loss.item())
        if not val_labels:
            model.weights, model.best_epoch = weights, epoch
        elif model.best_val_error_km is None or error < model.best_val_error_km:
            model.weights, model.best_epoch, model.best_val_error_km = weights, epoch, error
    log.log_run_complete(model.best_epoch, model.best_val_error_km or 0.0, "max_epochs", config.mlp_epochs)
    return model


def mlp_geo_predict(model: MlpGeoModel, targets: Sequence[str], index: PathIndex) -> Dict[str, Coordinate]:
    """Inverse-scaled predictions, one per target in order."""
    if not targets:
        return {}
    x = encode_inputs(targets, index, model.beta, model.routers)
    coords = model.scaler.inverse(mlp_forward(model.weights, x).value)
    return {ip: (float(lat), float(lon)) for ip, (lat, lon) in zip(targets, coords)}


def tune_mlp_geo(index: PathIndex, labels: Dict[str, Coordinate], val_labels: Dict[str, Coordinate],
                 config: BaselineConfig) -> MlpGeoModel:
    """Grid over learning rate and hidden width; the model with the lowest validation error wins."""
    if not val_labels:
        raise InsufficientDataError("MLP-Geo tuning needs validation landmarks")
    log = PipelineLogger("tune_mlp_geo")
    best: Optional[MlpGeoModel] = None
    for lr in LR_GRID:
        for hidden in HIDDEN_GRID:
            cell = config.model_copy(update={"mlp_lr": lr, "mlp_hidden": hidden})
            try:
                model = mlp_geo_train(index, labels, cell, val_labels)
            except DivergenceError as e:
                log.warning("Grid cell diverged", lr=lr, hidden=hidden, epoch=e.epoch)
                continue
            if best is None or model.best_val_error_km < best.best_val_error_km:
                best = model
    if best is None:
        raise DivergenceError("every MLP-Geo grid cell diverged")
    log.log_stage_complete(lr=best.lr, hidden=best.hidden, best_epoch=best.best_epoch,
                           val_error_km=best.best_val_error_km)
    return best
