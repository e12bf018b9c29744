"""
Synthetic time-correlated sparse CSI in the angular-delay domain.

Each UE gets a fixed sparse support of (delay, angle) cells whose mean power
decays exponentially with the delay index. On that support the channel
follows a stationary first-order Gauss-Markov recursion

    H_t = gamma * H_{t-1} + V_t,   Var(V_t) = (1 - gamma^2) * cell power

and the whole sequence is scaled by a per-UE path-loss factor drawn
log-uniformly over power_spread_db.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from data_acquisition.transform import inverse_dft
from utils.errors import ContractViolation
from utils.logger import setup_logger
from utils.settings import SHOW_PROGRESS

logger = setup_logger(__name__)


class ChannelConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    nb: int = Field(32, ge=1, description="gNB antennas")
    nf: int = Field(1024, ge=1, description="subcarriers")
    rd: int = Field(32, ge=1, description="retained delay rows")
    gamma_true: float = Field(0.99, ge=0.0, lt=1.0)
    num_paths: int = Field(32, ge=1)
    path_decay: float = Field(0.15, ge=0.0)
    power_spread_db: float = Field(40.0, ge=0.0)
    slots: int = Field(10, ge=1, description="sequence length T")
    seed: int = 2021
    preset: str = "custom"

    @model_validator(mode="after")
    def check_dimensions(self):
        if self.rd > self.nf:
            raise ValueError(f"rd={self.rd} exceeds nf={self.nf}")
        if self.num_paths > self.rd * self.nb:
            raise ValueError(f"num_paths={self.num_paths} exceeds rd*nb={self.rd * self.nb}")
        return self


# Synthetic stand-ins for low-mobility indoor and higher-mobility outdoor coherence
PRESETS: Dict[str, Dict] = {
    "slow": {"gamma_true": 0.99},
    "fast": {"gamma_true": 0.9},
}

# (train, test) sample counts
DATASET_SIZES: Dict[str, Tuple[int, int]] = {
    "desk": (5000, 1000),
    "large": (75000, 25000),
}


def preset_config(name: str, **overrides) -> ChannelConfig:
    if name not in PRESETS:
        raise ContractViolation(f"unknown preset {name!r}, expected one of {sorted(PRESETS)}")
    return ChannelConfig(**{**PRESETS[name], "preset": name, **overrides})


@dataclass
class CsiSequence:
    """K sequences of T complex [Rd, Nb] angular-delay matrices"""
    samples: np.ndarray  # [K, T, Rd, Nb] complex128
    power_scales: np.ndarray  # [K]
    sample_seeds: np.ndarray  # [K] uint32
    config: Optional[ChannelConfig] = None
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples.ndim != 4:
            raise ContractViolation(f"CSI samples must be [K, T, Rd, Nb], got {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ContractViolation("CSI samples contain non-finite values")

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_slots(self) -> int:
        return self.samples.shape[1]

    def slot(self, t: int) -> np.ndarray:
        """Slot t (1-based, as in the feedback protocol) for every sample"""
        if not 1 <= t <= self.num_slots:
            raise ContractViolation(f"slot {t} outside 1..{self.num_slots}")
        return self.samples[:, t - 1]


def _generate_sample(config: ChannelConfig, seed_seq: np.random.SeedSequence) -> Tuple[np.ndarray, float, int]:
    rng = np.random.default_rng(seed_seq)
    rows = np.repeat(np.arange(config.rd), config.nb)
    weights = np.exp(-config.path_decay * rows)

    support = rng.choice(config.rd * config.nb, size=config.num_paths, replace=False,
                         p=weights / weights.sum())
    power = weights[support] / weights[support].sum()

    def complex_gaussian(variance):
        return np.sqrt(variance / 2.0) * (rng.standard_normal(variance.shape)
                                          + 1j * rng.standard_normal(variance.shape))

    gamma = config.gamma_true
    values = np.empty((config.slots, config.num_paths), dtype=np.complex128)
    values[0] = complex_gaussian(power)
    for t in range(1, config.slots):
        values[t] = gamma * values[t - 1] + complex_gaussian((1.0 - gamma ** 2) * power)

    spread_db = rng.uniform(-config.power_spread_db / 2.0, config.power_spread_db / 2.0)
    power_scale = 10.0 ** (spread_db / 10.0)

    sequence = np.zeros((config.slots, config.rd * config.nb), dtype=np.complex128)
    sequence[:, support] = values * np.sqrt(power_scale)
    sample_seed = int(seed_seq.generate_state(1)[0])
    return sequence.reshape(config.slots, config.rd, config.nb), power_scale, sample_seed


def generate(config: ChannelConfig, num_samples: int, workers: int = 1,
             progress: Optional[bool] = None) -> CsiSequence:
    """Draw num_samples independent UE sequences; identical output for any worker count"""
    if not isinstance(config, ChannelConfig):
        raise ContractViolation("generate() needs a ChannelConfig")
    if num_samples < 1:
        raise ContractViolation(f"need at least one sample, got {num_samples}")
    show = SHOW_PROGRESS if progress is None else progress

    children = np.random.SeedSequence(config.seed).spawn(num_samples)
    samples = np.empty((num_samples, config.slots, config.rd, config.nb), dtype=np.complex128)
    power_scales = np.empty(num_samples)
    seeds = np.empty(num_samples, dtype=np.uint32)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        results = executor.map(lambda child: _generate_sample(config, child), children)
        for k, (sequence, scale, seed) in enumerate(
                tqdm(results, total=num_samples, desc="generate", disable=not show)):
            samples[k], power_scales[k], seeds[k] = sequence, scale, seed

    logger.info(f"Generated {num_samples} sequences (preset={config.preset}, "
                f"gamma={config.gamma_true}, T={config.slots}, Rd={config.rd}, Nb={config.nb})")
    return CsiSequence(samples, power_scales, seeds, config,
                       {"preset": config.preset, "seed": config.seed})


def to_spatial_frequency(csi: np.ndarray, config: ChannelConfig) -> np.ndarray:
    """[Rd, Nb] angular-delay CSI -> [Nf, Nb] spatial-frequency CSI"""
    csi = np.asarray(csi)
    if csi.shape[-2:] != (config.rd, config.nb):
        raise ContractViolation(f"expected [..., {config.rd}, {config.nb}], got {csi.shape}")
    return inverse_dft(csi, config.nf)


def lag_correlation(dataset: CsiSequence, lag: int = 1) -> float:
    """Re Trace(E{H_t H_{t-lag}^H}) / E||H||^2 pooled over samples and slot pairs"""
    if lag < 1 or lag >= dataset.num_slots:
        raise ContractViolation(f"lag {lag} needs 1 <= lag < T={dataset.num_slots}")
    current = dataset.samples[:, lag:]
    previous = dataset.samples[:, :-lag]
    cross = np.sum(np.real(current * previous.conj()))
    energy = np.sum(np.abs(dataset.samples) ** 2) * (dataset.num_slots - lag) / dataset.num_slots
    return float(cross / energy)
