"""Experiment configuration: one JSON file reproduces a run."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from respkit.errors import ContractError
from respkit.train import TrainConfig

CACHE_ENV_VAR = "RESPKIT_CACHE_DIR"

FRAMEWORKS = ("inception", "backbone", "transfer", "early_fusion", "middle_fusion")


@dataclass
class AugmentSettings:
    enabled: bool = True
    mixup_alpha: float = 0.4
    time_masks: int = 1
    time_width: int | None = None  # None: ~10% of the time axis
    freq_masks: int = 1
    freq_width: int | None = None
    augment_seed: int = 0


@dataclass
class ExperimentConfig:
    data_dir: str = "data"
    split_file: str = "split.txt"
    cache_dir: str = "cache"
    output_dir: str = "out"
    framework: str = "inception"
    model_spec: str = "Inc-03"  # inception spec name or backbone name
    provider_id: str = "fixture:2048:0"
    inception_checkpoint: str | None = None  # needed for early/middle fusion
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentSettings = field(default_factory=AugmentSettings)

    def __post_init__(self):
        if self.framework not in FRAMEWORKS:
            raise ContractError(
                f"framework must be one of {FRAMEWORKS}, got {self.framework!r}"
            )

    @property
    def effective_cache_dir(self) -> Path:
        return Path(os.environ.get(CACHE_ENV_VAR, self.cache_dir))

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        raw = json.loads(Path(path).read_text())
        train = TrainConfig(**raw.pop("train", {}))
        augment = AugmentSettings(**raw.pop("augment", {}))
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        return cls(train=train, augment=augment, **raw)

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(dataclasses.asdict(self), indent=2))
