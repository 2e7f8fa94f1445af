"""Configuration management for the engine.

``settings`` holds process-level defaults read from the environment
(prefix ``SAPLING_``) or a ``.env`` file. ``RunConfig`` is the validated
description of one pipeline run, usually loaded from a TOML file.
"""
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from utils.errors import ConfigError, DataError


class Settings(BaseSettings):
    """Process-wide settings."""

    model_config = SettingsConfigDict(
        env_prefix="SAPLING_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    log_level: str = "INFO"
    workers: int = Field(default_factory=lambda: os.cpu_count() or 1)
    block_size: int = 1024
    # Layers above this size never get fully materialised dense-in-principle rows
    dense_cap: int = 20_000
    # Dense block rows held at once by all workers stay under this
    memory_budget_mb: int = 16_384
    memmap_threshold_mb: int = 2048
    scratch_dir: Path = Path(".scratch")
    seed: int = 0


settings = Settings()


class EdgeListFormat(str, Enum):
    """Supported edge list layouts."""
    ADJACENCY = "adjacency"
    PAIRS = "pairs"


class IngestionKind(str, Enum):
    """How a raw input file becomes a bipartite graph."""
    EDGES = "edges"
    RCA = "rca"
    RATINGS = "ratings"


class Task(str, Enum):
    """What a benchmark run evaluates."""
    RANKING = "ranking"
    RATING = "rating"


class RunConfig(BaseModel):
    """Validated configuration of a single pipeline run."""

    model_config = {"extra": "forbid", "use_enum_values": False}

    # [data]
    dataset: str = "dataset"
    train_path: Optional[Path] = None
    test_path: Optional[Path] = None
    raw_path: Optional[Path] = None
    input_format: EdgeListFormat = EdgeListFormat.ADJACENCY
    ingestion: IngestionKind = IngestionKind.EDGES
    rca_threshold: float = 1.0
    min_rating: float = 3.0
    min_degree: int = 0
    test_fraction: float = 0.10
    temporal_cutoff_days: Optional[float] = None

    # [similarity]
    layer: str = "users"
    metric: str = "sapling"
    topk: Optional[int] = None

    # [scoring]
    mode: str = "hybrid"
    gamma: Optional[float] = None
    tune_grid: Optional[List[float]] = None
    include_self: bool = True
    exclude_train: bool = True

    # [evaluation]
    task: Task = Task.RANKING
    k: int = 20

    # [runtime]
    block_size: int = Field(default_factory=lambda: settings.block_size)
    workers: int = Field(default_factory=lambda: settings.workers)
    seed: int = Field(default_factory=lambda: settings.seed)
    output_dir: Path = Path("results")
    export_similarity: bool = False
    export_rankings: bool = True

    @field_validator("layer")
    @classmethod
    def _check_layer(cls, value: str) -> str:
        if value not in ("users", "items"):
            raise ValueError(f"layer must be 'users' or 'items', got {value!r}")
        return value

    @field_validator("metric")
    @classmethod
    def _check_metric(cls, value: str) -> str:
        from similarity.kernels import Metric
        try:
            return Metric(value).value
        except ValueError:
            known = ", ".join(m.value for m in Metric)
            raise ValueError(f"unknown metric {value!r}; expected one of {known}")

    @field_validator("mode")
    @classmethod
    def _check_mode(cls, value: str) -> str:
        if value not in ("user", "item", "hybrid", "popularity"):
            raise ValueError(f"mode must be user, item, hybrid or popularity, got {value!r}")
        return value

    @field_validator("gamma")
    @classmethod
    def _check_gamma(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not 0.0 <= value <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {value}")
        return value

    @field_validator("tune_grid")
    @classmethod
    def _check_grid(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is None:
            return value
        if not value:
            raise ValueError("tune_grid must not be empty")
        if any(not 0.0 <= g <= 1.0 for g in value):
            raise ValueError("tune_grid values must lie in [0, 1]")
        return sorted(set(value))

    @field_validator("k", "block_size", "workers")
    @classmethod
    def _check_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"must be >= 1, got {value}")
        return value

    @field_validator("topk")
    @classmethod
    def _check_topk(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value < 1:
            raise ValueError(f"topk must be >= 1, got {value}")
        return value

    @field_validator("test_fraction")
    @classmethod
    def _check_fraction(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError(f"test_fraction must lie in (0, 1), got {value}")
        return value

    @model_validator(mode="after")
    def _check_gamma_source(self) -> "RunConfig":
        if self.mode == "hybrid":
            if self.gamma is not None and self.tune_grid is not None:
                raise ValueError("conflicting keys 'gamma' and 'tune_grid': set exactly one for hybrid mode")
            if self.gamma is None and self.tune_grid is None:
                raise ValueError("hybrid mode needs exactly one of 'gamma' or 'tune_grid'")
        if self.train_path is None and self.raw_path is None:
            raise ValueError("one of 'train_path' or 'raw_path' is required")
        return self

    @property
    def effective_gamma(self) -> Optional[float]:
        """Gamma implied by the mode (0 for user-based, 1 for item-based)."""
        if self.mode == "user":
            return 0.0
        if self.mode == "item":
            return 1.0
        return self.gamma

    def validate_paths(self):
        """Check that every referenced input exists before any work starts."""
        for key in ("train_path", "test_path", "raw_path"):
            path = getattr(self, key)
            if path is not None and not Path(path).is_file():
                raise DataError(f"{key} does not exist: {path}")

    def echo(self) -> Dict[str, Any]:
        """JSON-friendly copy of the configuration for report audit trails."""
        return self.model_dump(mode="json", exclude={"workers", "output_dir"})

    @classmethod
    def from_toml(
        cls,
        path: Optional[Path] = None,
        overrides: Optional[Dict[str, Any]] = None,
        defaults: Optional[Dict[str, Any]] = None,
        drop: Sequence[str] = (),
    ) -> "RunConfig":
        """Load a sectioned TOML file into the flat model.

        ``overrides`` win over file keys, ``defaults`` only fill keys that are
        still missing, and keys in ``drop`` are discarded before validation.
        """
        values: Dict[str, Any] = {}
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise DataError(f"config file does not exist: {path}")
            try:
                with open(path, "rb") as fh:
                    raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as e:
                raise ConfigError(f"cannot parse {path}: {e}")
            values.update(_flatten_sections(raw))
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = value
        for key in drop:
            values.pop(key, None)
        for key, value in (defaults or {}).items():
            values.setdefault(key, value)
        return cls.model_validate(values)


def _flatten_sections(raw: Dict[str, Any]) -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            for inner_key, inner_value in value.items():
                if inner_key in flat:
                    raise ConfigError(f"key {inner_key!r} appears in more than one section")
                flat[inner_key] = inner_value
        else:
            if key in flat:
                raise ConfigError(f"key {key!r} appears in more than one section")
            flat[key] = value
    return flat
