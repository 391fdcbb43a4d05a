"""Experiment configuration: one JSON document holding every stage's settings.

The top-level `seed` is inherited by each section that does not set its own.
A run manifest (see pipeline.py) embeds the resolved config under "config" and
can be passed back as `--config` to replay the run.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from scarlet_kit.config import DEFAULT_EXPERIMENT_CONFIG, SPACES_DIR
from scarlet_kit.data.dataset import DatasetConfig
from scarlet_kit.errors import ConfigError
from scarlet_kit.evolution.search import SearchConfig
from scarlet_kit.oracle.ground_truth import OracleConfig
from scarlet_kit.search_space.spec import SpaceSpec, load_space
from scarlet_kit.training.trainer import TrainConfig

logger = logging.getLogger(__name__)

SEEDED_SECTIONS = ("dataset", "train", "search", "oracle", "fold", "diagnose")


class FoldConfig(BaseModel):
    probes: int = Field(default=100, ge=1)
    tolerance: float = Field(default=1e-4, gt=0)
    batch_size: int = Field(default=4, ge=1)
    seed: int = 0


class DiagnoseConfig(BaseModel):
    histogram_samples: int = Field(default=200, ge=1)
    probe_size: int = Field(default=32, ge=1)
    # every searchable layer when unset
    layers: Optional[List[int]] = None
    seed: int = 0


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    space: str = "t1"
    seed: int = Field(default=0, ge=0)
    output_dir: Optional[str] = None
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    search: SearchConfig = Field(default_factory=SearchConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    fold: FoldConfig = Field(default_factory=FoldConfig)
    diagnose: DiagnoseConfig = Field(default_factory=DiagnoseConfig)

    @model_validator(mode="before")
    @classmethod
    def _inherit_seed(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        seed = data.get("seed", 0)
        for section in SEEDED_SECTIONS:
            body = data.get(section)
            if body is None or isinstance(body, dict):
                body = dict(body or {})
                body.setdefault("seed", seed)
                data[section] = body
        return data

    @field_validator("space")
    @classmethod
    def _space_exists(cls, value: str) -> str:
        if not (SPACES_DIR / f"{value}.json").exists() and not Path(value).is_file():
            raise ValueError(f"{value!r} is neither a bundled space (t1, s1, s2) nor an existing file")
        return value

    @model_validator(mode="after")
    def _dataset_exists(self):
        if self.dataset.path and not Path(self.dataset.path).is_file():
            raise ValueError(f"dataset.path {self.dataset.path!r} does not exist")
        return self

    def load_space(self) -> SpaceSpec:
        return load_space(self.space)

    def seeds(self) -> Dict[str, int]:
        return {"seed": self.seed, **{section: getattr(self, section).seed for section in SEEDED_SECTIONS}}

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of the config; the output directory is not part of it."""
        canonical = json.dumps(self.model_dump(mode="json", exclude={"output_dir"}), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[Union[str, Path]] = None) -> "ExperimentConfig":
        """Copy with command-line overrides applied; a seed replaces every section's seed."""
        data = self.model_dump(mode="json")
        if seed is not None:
            data["seed"] = seed
            for section in SEEDED_SECTIONS:
                data[section]["seed"] = seed
        if output_dir is not None:
            data["output_dir"] = str(output_dir)
        return ExperimentConfig.model_validate(data)


def load_experiment_config(path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    """Read an experiment config, or the config embedded in a run manifest."""
    path = Path(path) if path else DEFAULT_EXPERIMENT_CONFIG
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if isinstance(data, dict) and "config_hash" in data and "config" in data:
        logger.info(f"📋 Replaying {data.get('command', 'run')} manifest {path} (config {data['config_hash'][:12]})")
        data = data["config"]
    return ExperimentConfig.model_validate(data)


def describe_validation_error(exc: ValidationError) -> str:
    """Field-level summary, one `section.field: message` per problem."""
    return "; ".join(
        f"{'.'.join(str(part) for part in error['loc']) or '<root>'}: {error['msg']}" for error in exc.errors()
    )
