"""
Configuration management for the GNN geolocation pipeline.

Supports multiple configuration sources with precedence:
1. Command-line flags (highest priority)
2. Config file: YAML with one mapping per section, or flat ``section.key=value`` text
3. Default values (lowest priority)

Only the logging section reads environment variables (``LOG_LEVEL``, ``LOG_FORMAT``).
"""

import math
from pathlib import Path
from typing import Optional, List, Any, Dict, Literal

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings

from app.utils.exceptions import ConfigurationError

# Load environment variables from .env file
load_dotenv()

AGGREGATORS = ("mean", "sum", "max")
DECODERS = ("vanilla", "vanilla_bn", "sigmoid", "bn_sigmoid")
BASELINE_METHODS = ("slg", "corr-slg", "mlp-geo")


class LoggingConfig(BaseSettings):
    """Logging configuration."""
    level: str = Field(default="INFO", validation_alias="LOG_LEVEL")
    format: str = Field(default="text", validation_alias="LOG_FORMAT")  # json or text

    model_config = {
        "env_file": ".env",
        "case_sensitive": False,
        "extra": "ignore",
        "populate_by_name": True,
    }


class RegionBox(BaseModel):
    """Latitude/longitude bounding box in decimal degrees."""
    lat_min: float = Field(default=22.19, ge=-90, le=90)
    lat_max: float = Field(default=22.55, ge=-90, le=90)
    lon_min: float = Field(default=113.85, ge=-180, le=180)
    lon_max: float = Field(default=114.33, ge=-180, le=180)

    @model_validator(mode="after")
    def check_non_degenerate(self):
        if not (self.lat_max > self.lat_min and self.lon_max > self.lon_min):
            raise ValueError("region box must have lat_max > lat_min and lon_max > lon_min")
        return self

    @property
    def center(self):
        return ((self.lat_min + self.lat_max) / 2.0, (self.lon_min + self.lon_max) / 2.0)

    def contains(self, lat: float, lon: float) -> bool:
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max


class SynthConfig(BaseModel):
    """Synthetic network generator configuration."""
    n_landmarks: int = Field(default=50, gt=0)
    n_routers: int = Field(default=20, gt=0)
    region: RegionBox = Field(default_factory=RegionBox)
    repetitions: int = Field(default=30, gt=0)
    prop_speed_km_per_ms: float = Field(default=100.0, gt=0)
    per_hop_noise_ms: float = Field(default=0.1, ge=0)
    rule_violation_fraction: float = Field(default=0.0, ge=0, le=1)
    anonymity_prob: float = Field(default=0.05, ge=0, le=1)
    extra_edges: int = Field(default=0, ge=0)
    attach_radius_km: float = Field(default=3.0, ge=0)
    probe_ip: str = Field(default="10.0.0.1")
    seed: int = Field(default=0, ge=0, lt=2 ** 64)


class ProbeConfig(BaseModel):
    """Probing host identity."""
    ip: str = Field(default="10.0.0.1")


class ModelConfig(BaseModel):
    """GNN architecture hyperparameters."""
    node_dim: int = Field(default=64, gt=0, alias="G")
    edge_dim: int = Field(default=8, gt=0, alias="K")
    num_layers: int = Field(default=2, ge=1, le=5, alias="L")
    aggregator: Literal["mean", "sum", "max"] = "mean"
    edge_hidden: Optional[int] = Field(default=None, gt=0)
    decoder: Literal["vanilla", "vanilla_bn", "sigmoid", "bn_sigmoid"] = "bn_sigmoid"
    regularize_all: bool = False
    seed: int = Field(default=0, ge=0)

    model_config = ConfigDict(populate_by_name=True)

    @field_validator("node_dim")
    @classmethod
    def validate_even(cls, v):
        if v % 2:
            raise ValueError("node embedding size G must be even")
        return v

    @property
    def edge_hidden_units(self) -> int:
        """Edge-network hidden width; defaults to 2K."""
        return self.edge_hidden or 2 * self.edge_dim

    @property
    def uses_batch_norm(self) -> bool:
        return self.decoder in ("vanilla_bn", "bn_sigmoid")

    @property
    def uses_sigmoid(self) -> bool:
        return self.decoder in ("sigmoid", "bn_sigmoid")


class TrainConfig(BaseModel):
    """Training loop configuration."""
    lr: float = Field(default=0.001, ge=0)
    weight_decay: float = Field(default=0.001, ge=0, alias="lambda")
    max_epochs: int = Field(default=4000, gt=0)
    patience: int = Field(default=1000, gt=0)
    rule_based: bool = True
    seed: int = Field(default=0, ge=0)
    log_every: int = Field(default=100, gt=0)
    model: ModelConfig = Field(default_factory=ModelConfig)

    model_config = ConfigDict(populate_by_name=True)

    @model_validator(mode="after")
    def check_patience(self):
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        return self


class SplitSpec(BaseModel):
    """Landmark split fractions."""
    train: float = Field(default=0.7, gt=0, lt=1)
    val: float = Field(default=0.2, gt=0, lt=1)
    test: float = Field(default=0.1, gt=0, lt=1)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_sum(self):
        if not math.isclose(self.train + self.val + self.test, 1.0, abs_tol=1e-9):
            raise ValueError("split fractions must sum to 1")
        return self


class BaselineConfig(BaseModel):
    """Baseline method configuration."""
    method: Literal["slg", "corr-slg", "mlp-geo"] = "slg"
    ca: Optional[float] = Field(default=None, ge=-1, le=1)
    cb: Optional[float] = Field(default=None, ge=-1, le=1)
    beta: float = Field(default=30.0)
    mlp_hidden: int = Field(default=64, gt=0)
    mlp_lr: float = Field(default=0.001, ge=0)
    mlp_epochs: int = Field(default=20000, gt=0)
    tune: bool = False
    seed: int = Field(default=0, ge=0)


SECTIONS = {
    "logging": LoggingConfig,
    "synth": SynthConfig,
    "probe": ProbeConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "split": SplitSpec,
    "baseline": BaselineConfig,
}


def parse_key_value_config(text: str) -> Dict[str, Dict[str, Any]]:
    """Parse a flat ``section.key=value`` config file into nested section dicts.

    Values are interpreted with YAML scalar rules so ``0.001``, ``true`` and ``[32, 64]``
    get their natural types. Nested keys (``synth.region.lat_min``) create nested dicts.
    """
    result: Dict[str, Dict[str, Any]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected key=value", {"line": raw})
        key, value = (part.strip() for part in line.split("=", 1))
        parts = key.split(".")
        if len(parts) < 2 or parts[0] not in SECTIONS:
            raise ConfigurationError(f"config line {lineno}: unknown key '{key}'")
        target = result.setdefault(parts[0], {})
        for part in parts[1:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = yaml.safe_load(value) if value else None
    return result


class Settings:
    """Main configuration class that aggregates all config sections."""

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = config_file
        self._file_config = self._load_config_file()

        self.logging = self._init_config(LoggingConfig)
        self.synth = self._init_config(SynthConfig)
        self.probe = self._init_config(ProbeConfig)
        self.model = self._init_config(ModelConfig)
        self.split = self._init_config(SplitSpec)
        self.baseline = self._init_config(BaselineConfig)
        train_values = dict(self._file_config.get("train", {}))
        train_values.pop("model", None)
        self.train = self._build(TrainConfig, {**train_values, "model": self.model})

    def _load_config_file(self) -> Dict[str, Any]:
        """Load configuration from the config file if one was given."""
        if not self.config_file:
            return {}
        config_path = Path(self.config_file)
        if not config_path.exists():
            raise ConfigurationError(f"config file not found: {self.config_file}")
        text = config_path.read_text(encoding="utf-8")
        if config_path.suffix in (".yaml", ".yml"):
            try:
                data = yaml.safe_load(text) or {}
            except yaml.YAMLError as e:
                raise ConfigurationError(f"failed to parse {self.config_file}: {e}")
            if not isinstance(data, dict):
                raise ConfigurationError(f"{self.config_file} must contain a mapping of sections")
            unknown = sorted(set(data) - set(SECTIONS))
            if unknown:
                raise ConfigurationError(f"unknown config sections: {', '.join(unknown)}")
            return data
        return parse_key_value_config(text)

    def _init_config(self, config_class):
        """Initialize a configuration section with file values as defaults."""
        section_name = next(name for name, cls in SECTIONS.items() if cls is config_class)
        return self._build(config_class, self._file_config.get(section_name, {}) or {})

    @staticmethod
    def _build(config_class, values: Dict[str, Any]):
        try:
            return config_class(**values)
        except ValidationError as e:
            raise ConfigurationError(f"invalid {config_class.__name__}: {e}", {"errors": e.errors()})

    def apply_overrides(self, section: str, values: Dict[str, Any]) -> "Settings":
        """Merge command-line flag values into a section; ``None`` values are ignored."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        current = getattr(self, section)
        merged = {**current.model_dump(by_alias=False), **values}
        if section == "train":
            merged["model"] = self.model
        updated = self._build(SECTIONS[section], merged)
        setattr(self, section, updated)
        if section == "model":
            self.train = self._build(TrainConfig, {**self.train.model_dump(exclude={"model"}), "model": updated})
        return self

    def effective(self) -> Dict[str, Any]:
        """Return the merged configuration as plain data for provenance output."""
        data = {}
        for name in SECTIONS:
            section = getattr(self, name)
            if name == "train":
                data[name] = section.model_dump(mode="json", exclude={"model"})
            else:
                data[name] = section.model_dump(mode="json")
        return data

    def write_effective(self, out_dir: Path, extra: Optional[Dict[str, Any]] = None) -> Path:
        """Echo the effective configuration into an output directory."""
        data = self.effective()
        if extra:
            data["run"] = extra
        path = Path(out_dir) / "effective_config.yaml"
        path.write_text(yaml.safe_dump(data, sort_keys=True), encoding="utf-8")
        return path


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get the global settings instance."""
    return settings


def reload_settings(config_file: Optional[str] = None) -> Settings:
    """Reload settings from configuration sources."""
    global settings
    settings = Settings(config_file)
    return settings
