"""
Logging configuration and utilities for the GNN geolocation pipeline.

Provides structured logging with JSON or text format support,
and specialized loggers for the pipeline stages and training runs.
"""

import logging
import sys
from datetime import datetime
from typing import Optional

import structlog
from structlog.stdlib import LoggerFactory

from app.config import get_settings


def configure_logging(level: Optional[str] = None, fmt: Optional[str] = None):
    """Configure structured logging for the application."""
    settings = get_settings()
    level = (level or settings.logging.level).upper()
    fmt = fmt or settings.logging.format

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer() if fmt == "json"
            else structlog.dev.ConsoleRenderer(colors=False)
        ],
        context_class=dict,
        logger_factory=LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=False,
    )

    # stdout carries command output; logs go to stderr
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(handler)
    root.setLevel(getattr(logging, level, logging.INFO))


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    """Get a structured logger for the given name."""
    return structlog.get_logger(name)


class TrainingLogger:
    """Specialized logger for a single training run."""

    def __init__(self, run_id: str, decoder: str):
        self.logger = get_logger("training")
        self.run_id = run_id
        self.decoder = decoder
        self.start_time = datetime.utcnow()

    def info(self, message: str, **kwargs):
        """Log info message with run context."""
        self.logger.info(message, run_id=self.run_id, decoder=self.decoder, **kwargs)

    def debug(self, message: str, **kwargs):
        """Log debug message with run context."""
        self.logger.debug(message, run_id=self.run_id, decoder=self.decoder, **kwargs)

    def warning(self, message: str, **kwargs):
        """Log warning message with run context."""
        self.logger.warning(message, run_id=self.run_id, decoder=self.decoder, **kwargs)

    def error(self, message: str, **kwargs):
        """Log error message with run context."""
        self.logger.error(message, run_id=self.run_id, decoder=self.decoder, **kwargs)

    def log_run_start(self, n_nodes: int, n_edges: int, n_train: int, n_val: int):
        """Log training run start."""
        self.info(
            "Training started",
            n_nodes=n_nodes,
            n_edges=n_edges,
            n_train=n_train,
            n_val=n_val,
            started_at=self.start_time.isoformat()
        )

    def log_epoch(self, epoch: int, train_loss: float, val_error_km: float, every: int = 100):
        """Log epoch progress at the configured cadence."""
        if epoch == 1 or epoch % every == 0:
            self.debug("Epoch finished", epoch=epoch, train_loss=train_loss, val_error_km=val_error_km)

    def log_run_complete(self, best_epoch: int, best_val_error_km: float, stop_reason: str, epochs: int):
        """Log training run completion."""
        duration = (datetime.utcnow() - self.start_time).total_seconds()
        self.info(
            "Training completed",
            best_epoch=best_epoch,
            best_val_error_km=best_val_error_km,
            stop_reason=stop_reason,
            epochs=epochs,
            duration_seconds=duration
        )

    def log_divergence(self, epoch: int, loss: float):
        """Log a non-finite loss."""
        self.error("Training diverged", epoch=epoch, loss=loss)


class PipelineLogger:
    """Specialized logger for file-based pipeline stages."""

    def __init__(self, stage: str):
        self.logger = get_logger("pipeline")
        self.stage = stage
        self.start_time = datetime.utcnow()

    def info(self, message: str, **kwargs):
        """Log info message with stage context."""
        self.logger.info(message, stage=self.stage, **kwargs)

    def warning(self, message: str, **kwargs):
        """Log warning message with stage context."""
        self.logger.warning(message, stage=self.stage, **kwargs)

    def error(self, message: str, **kwargs):
        """Log error message with stage context."""
        self.logger.error(message, stage=self.stage, **kwargs)

    def log_stage_start(self, **kwargs):
        """Log stage start."""
        self.info("Stage started", started_at=self.start_time.isoformat(), **kwargs)

    def log_stage_complete(self, **kwargs):
        """Log stage completion with result counts."""
        duration = (datetime.utcnow() - self.start_time).total_seconds()
        self.info("Stage completed", duration_seconds=duration, **kwargs)

    def log_orientation_conflicts(self, count: int):
        """Log edges seen with conflicting head/tail orientation."""
        if count:
            self.warning("Edges observed with conflicting orientation", conflict_count=count)

    def log_out_of_box(self, count: int):
        """Log scaled coordinates falling outside the unit box."""
        if count:
            self.warning("Coordinates outside scaler box", count=count)


# Initialize logging on module import
configure_logging()
