"""Reconstruction accuracy metrics."""

from dataclasses import dataclass

import numpy as np

from utils.errors import ContractViolation
from utils.logger import setup_logger

logger = setup_logger(__name__)


@dataclass
class NmseResult:
    linear: float
    db: float  # -inf when the reconstruction is exact
    samples: int
    excluded: int  # zero-energy truth samples left out of the average


def to_db(linear: float) -> float:
    return 10.0 * np.log10(linear) if linear > 0 else float("-inf")


def per_sample_nmse(truth: np.ndarray, recon: np.ndarray) -> np.ndarray:
    """||H - H_hat||^2 / ||H||^2 for each sample along axis 0; NaN where ||H|| == 0"""
    truth = np.asarray(truth)
    recon = np.asarray(recon)
    if truth.shape != recon.shape:
        raise ContractViolation(f"shape mismatch: truth {truth.shape} vs reconstruction {recon.shape}")
    axes = tuple(range(1, truth.ndim))
    energy = np.sum(np.abs(truth) ** 2, axis=axes)
    error = np.sum(np.abs(truth - recon) ** 2, axis=axes)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(energy > 0, error / np.where(energy > 0, energy, 1.0), np.nan)


def nmse(truth: np.ndarray, recon: np.ndarray) -> NmseResult:
    ratios = per_sample_nmse(truth, recon)
    valid = ~np.isnan(ratios)
    excluded = int(np.count_nonzero(~valid))
    if not np.any(valid):
        raise ContractViolation("every truth sample has zero energy; NMSE undefined")
    if excluded:
        logger.warning(f"{excluded} zero-energy samples excluded from NMSE")
    linear = float(np.mean(ratios[valid]))
    return NmseResult(linear, to_db(linear), int(np.count_nonzero(valid)), excluded)
