"""
Plugin entropy estimates of uniformly quantized CSI elements.

Real and imaginary parts of every angular-delay element are treated as
separate scalar sources. Conditional entropy H(X_t | X_{t-delta}) is the joint
plugin entropy minus the plugin entropy of the conditioning marginal, so the
sum rule holds exactly. Joint tables are sparse: only occupied bins are kept.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.stats import entropy as plugin_entropy

from data_acquisition.channel_model import CsiSequence
from data_acquisition.transform import to_real
from utils.errors import ContractViolation
from utils.logger import setup_logger

logger = setup_logger(__name__)

DEFAULT_BITS = 14
UNCONDITIONAL = float("inf")
ELEMENT_CHUNK = 128


def _entropy_bits(counts: np.ndarray) -> float:
    if counts.size == 0:
        return 0.0
    return float(plugin_entropy(counts, base=2))


@dataclass
class UniformCoder:
    """b-bit uniform quantizer over one global [low, high] range"""
    bits: int = DEFAULT_BITS
    low: float = -1.0
    high: float = 1.0

    @classmethod
    def fit(cls, values: np.ndarray, bits: int = DEFAULT_BITS) -> "UniformCoder":
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise ContractViolation("cannot fit a quantizer range on empty data")
        return cls(bits, float(values.min()), float(values.max()))

    @property
    def levels(self) -> int:
        return 2 ** self.bits

    def codes(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        span = self.high - self.low
        if span <= 0:
            return np.zeros(values.shape, dtype=np.int64)
        codes = np.floor((values - self.low) / span * self.levels)
        return np.clip(codes, 0, self.levels - 1).astype(np.int64)


@dataclass
class HistogramEstimator:
    """Sparse joint histogram of (code_{t-delta}, code_t) pairs and the conditioning marginal"""
    coder: UniformCoder
    joint_keys: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))
    joint_counts: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    marginal_keys: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    marginal_counts: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    sample_count: int = 0

    def fit(self, previous: np.ndarray, current: np.ndarray) -> "HistogramEstimator":
        previous = np.ravel(previous)
        current = np.ravel(current)
        if previous.shape != current.shape:
            raise ContractViolation("pair halves differ in length")
        if previous.size < 2:
            raise ContractViolation(f"need at least 2 pairs, got {previous.size}")
        pairs = np.stack([self.coder.codes(previous), self.coder.codes(current)], axis=1)
        self.joint_keys, self.joint_counts = np.unique(pairs, axis=0, return_counts=True)
        self.marginal_keys, self.marginal_counts = np.unique(pairs[:, 0], return_counts=True)
        self.sample_count = int(previous.size)
        return self

    @property
    def occupied_bins(self) -> int:
        return int(self.joint_counts.size)

    def joint_entropy(self) -> float:
        return _entropy_bits(self.joint_counts)

    def marginal_entropy(self) -> float:
        return _entropy_bits(self.marginal_counts)

    def conditional_entropy(self) -> float:
        return self.joint_entropy() - self.marginal_entropy()


@dataclass
class EntropyEstimate:
    bits_per_element: float
    occupied_bins: int
    samples: int


def element_entropy(samples: np.ndarray, bits: int = DEFAULT_BITS,
                    coder: Optional[UniformCoder] = None) -> EntropyEstimate:
    samples = np.ravel(np.asarray(samples, dtype=np.float64))
    if samples.size < 2:
        raise ContractViolation(f"need at least 2 samples, got {samples.size}")
    coder = coder or UniformCoder.fit(samples, bits)
    _, counts = np.unique(coder.codes(samples), return_counts=True)
    return EntropyEstimate(_entropy_bits(counts), int(counts.size), int(samples.size))


def conditional_entropy(previous: np.ndarray, current: np.ndarray, bits: int = DEFAULT_BITS,
                        coder: Optional[UniformCoder] = None) -> EntropyEstimate:
    """H(X_t | X_{t-delta}) from paired samples; the range covers both halves unless a coder is given"""
    previous = np.asarray(previous, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    if previous.size == 0 or current.size == 0:
        raise ContractViolation("conditional entropy of empty input")
    coder = coder or UniformCoder.fit(np.concatenate([np.ravel(previous), np.ravel(current)]), bits)
    estimator = HistogramEstimator(coder).fit(previous, current)
    return EntropyEstimate(estimator.conditional_entropy(), estimator.occupied_bins, estimator.sample_count)


def block_joint_entropy(values: np.ndarray, bits: int = DEFAULT_BITS,
                        coder: Optional[UniformCoder] = None) -> EntropyEstimate:
    """Joint entropy of a small block of elements, values [n_samples, n_elements]"""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] < 2:
        raise ContractViolation(f"block values must be [n >= 2, m], got {values.shape}")
    coder = coder or UniformCoder.fit(values, bits)
    _, counts = np.unique(coder.codes(values), axis=0, return_counts=True)
    return EntropyEstimate(_entropy_bits(counts), int(counts.size), int(values.shape[0]))


def _per_element_entropy(keys: np.ndarray, elements: int, shift: int,
                         per_element: int) -> Tuple[np.ndarray, np.ndarray]:
    """Plugin entropy per element from packed int64 keys (element id in the high bits)"""
    occupied, counts = np.unique(keys, return_counts=True)
    owner = occupied >> shift
    weighted = np.bincount(owner, weights=counts * np.log2(counts), minlength=elements)
    return np.log2(per_element) - weighted / per_element, np.bincount(owner, minlength=elements)


def _sweep_chunk(codes: np.ndarray, delta: float, bits: int):
    """codes [K, T, E]; returns (per-element entropies, per-element occupied bins, samples per element)"""
    k, t, e = codes.shape
    element = np.arange(e, dtype=np.int64)
    if delta == UNCONDITIONAL:
        keys = (element[None, None, :] << bits) | codes
        values, occupied = _per_element_entropy(keys.ravel(), e, bits, k * t)
        return values, occupied, k * t
    d = int(delta)
    previous, current = codes[:, :-d], codes[:, d:]
    per_element = k * (t - d)
    joint_keys = (element[None, None, :] << (2 * bits)) | (previous << bits) | current
    marginal_keys = (element[None, None, :] << bits) | previous
    joint, occupied = _per_element_entropy(joint_keys.ravel(), e, 2 * bits, per_element)
    marginal, _ = _per_element_entropy(marginal_keys.ravel(), e, bits, per_element)
    return joint - marginal, occupied, per_element


def entropy_sweep(dataset: CsiSequence, deltas: Iterable[int], bits: int = DEFAULT_BITS,
                  workers: int = 1) -> pd.DataFrame:
    """
    Average conditional entropy over the 2*Rd*Nb real components for each
    feedback interval delta, plus a final unconditional (delta = inf) row.
    """
    deltas = [int(d) for d in deltas]
    for d in deltas:
        if not 1 <= d < dataset.num_slots:
            raise ContractViolation(f"delta {d} needs 1 <= delta < T={dataset.num_slots}")
    if 2 * bits + int(np.ceil(np.log2(max(2, 2 * dataset.samples[0, 0].size)))) > 62:
        raise ContractViolation(f"{bits}-bit codes do not fit packed joint keys")

    real = to_real(dataset.samples)  # [K, T, 2, Rd, Nb]
    k, t = real.shape[:2]
    values = real.reshape(k, t, -1)
    codes = UniformCoder.fit(values, bits).codes(values)
    chunks = [codes[:, :, i:i + ELEMENT_CHUNK] for i in range(0, codes.shape[2], ELEMENT_CHUNK)]

    rows: List[dict] = []
    for delta in deltas + [UNCONDITIONAL]:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
            parts = list(executor.map(lambda c: _sweep_chunk(c, delta, bits), chunks))
        entropies = np.concatenate([p[0] for p in parts])
        occupied = np.concatenate([p[1] for p in parts])
        rows.append({
            "delta_slots": delta,
            "bits": bits,
            "avg_conditional_entropy": float(np.mean(entropies)),
            "avg_occupied_bins": float(np.mean(occupied)),
            "samples": int(parts[0][2]),
        })
        logger.info(f"delta={delta}: {rows[-1]['avg_conditional_entropy']:.4f} bits/element")

    return pd.DataFrame(rows)
