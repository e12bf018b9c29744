"""
Experiment manifests: everything a report row needs to be reproduced.

The manifest hash (md5 of the canonical JSON, 12 hex chars) is embedded in
every report and registry row.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from data_acquisition.channel_model import DATASET_SIZES, ChannelConfig, preset_config
from feedback.codec import COMPRESSION_RATIOS
from feedback.markovnet import TrainingSchedule
from feedback.quantizer import QuantizerSpec
from utils.errors import ConfigurationError, DatasetIOError
from utils.settings import DEFAULT_SEED


def _snap_ratio(value: float) -> float:
    for allowed in COMPRESSION_RATIOS:
        if abs(value - allowed) < 1e-12:
            return allowed
    raise ValueError(f"compression ratio {value} not in {{1/4, 1/8, 1/16, 1/32, 1/64}}")


def parse_ratio(text: Union[str, float]) -> float:
    """'1/16', '0.0625' or 16 -> 0.0625"""
    if isinstance(text, (int, float)):
        value = float(text)
    elif "/" in text:
        numerator, denominator = text.split("/", 1)
        value = float(numerator) / float(denominator)
    else:
        value = float(text)
    if value > 1:
        value = 1.0 / value
    try:
        return _snap_ratio(value)
    except ValueError as e:
        raise ConfigurationError(str(e)) from e


class ExperimentManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "markovnet"
    preset: Literal["slow", "fast"] = "slow"
    size: Literal["desk", "large"] = "desk"
    train_samples: Optional[int] = Field(None, ge=2)
    test_samples: Optional[int] = Field(None, ge=1)
    slots: int = Field(10, ge=1)
    # ChannelConfig overrides (rd, nb, nf, num_paths, power_spread_db, ...)
    channel: Dict[str, Any] = Field(default_factory=dict)
    dataset: Optional[str] = None
    test_dataset: Optional[str] = None

    cr1: float = 1 / 4
    cr2: List[float] = Field(default_factory=lambda: [1 / 16])
    heads: List[Literal["fc", "cnn"]] = Field(default_factory=lambda: ["fc"])
    spherical: bool = True
    baselines: List[Literal["independent", "csinet_pro"]] = Field(default_factory=list)
    # CodecConfig overrides (encoder_widths, kernel_size, ...)
    codec: Dict[str, Any] = Field(default_factory=dict)
    schedule: TrainingSchedule = Field(default_factory=TrainingSchedule)
    quantizers: List[QuantizerSpec] = Field(default_factory=list)
    magnitude_bits: int = Field(16, ge=1, le=32)

    seed: int = DEFAULT_SEED
    workers: int = Field(1, ge=1)

    @field_validator("cr1")
    @classmethod
    def check_cr1(cls, value):
        return _snap_ratio(value)

    @field_validator("cr2")
    @classmethod
    def check_cr2(cls, value):
        if not value:
            raise ValueError("at least one CR2 is needed")
        return [_snap_ratio(v) for v in value]

    @property
    def sample_counts(self):
        train, test = DATASET_SIZES[self.size]
        return self.train_samples or train, self.test_samples or test

    def channel_config(self, split: str = "train") -> ChannelConfig:
        # Test data comes from a disjoint seed stream
        seed = self.seed if split == "train" else self.seed + 1
        return preset_config(self.preset, **{"slots": self.slots, **self.channel, "seed": seed})

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def manifest_hash(self) -> str:
        return hashlib.md5(self.canonical_json().encode("utf-8")).hexdigest()[:12]


def load_manifest(path: Union[str, Path]) -> ExperimentManifest:
    path = Path(path)
    if not path.exists():
        raise DatasetIOError(f"manifest not found: {path}")
    try:
        return ExperimentManifest(**json.loads(path.read_text()))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path} is not valid JSON: {e}") from e


def save_manifest(manifest: ExperimentManifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=1))
    return path
