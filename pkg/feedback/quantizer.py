"""
Codeword quantization: mu-law companding, a b-bit mid-rise quantizer with step
2^(1-b) over [-1, 1], and the exact inverse expansion. Applied at inference
only; the codecs are never retrained for it.
"""

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from utils.counters import ClipCounter
from utils.errors import ContractViolation
from utils.logger import setup_logger

logger = setup_logger(__name__)

PASSTHROUGH_BITS = 32


class QuantizerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    bits: int = 6
    mu: float = Field(255.0, gt=0.0)
    mode: Literal["mu_law", "uniform"] = "mu_law"

    @field_validator("bits")
    @classmethod
    def check_bits(cls, value):
        if not (1 <= value <= 16 or value == PASSTHROUGH_BITS):
            raise ValueError(f"bits must be in 1..16 or {PASSTHROUGH_BITS} (passthrough), got {value}")
        return value

    @property
    def passthrough(self) -> bool:
        return self.bits == PASSTHROUGH_BITS

    @property
    def step(self) -> float:
        return 2.0 ** (1 - self.bits)

    def label(self) -> str:
        return "fp32" if self.passthrough else f"{self.mode}{self.bits}"


def compand(x, mu: float = 255.0, counter: Optional[ClipCounter] = None) -> np.ndarray:
    """f(x) = sgn(x) ln(1 + mu|x|) / ln(1 + mu); |x| > 1 saturates to sgn(x)"""
    x = np.asarray(x, dtype=np.float64)
    if counter is not None:
        counter.observe(x)
    x = np.clip(x, -1.0, 1.0)
    return np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)


def expand(y, mu: float = 255.0) -> np.ndarray:
    y = np.clip(np.asarray(y, dtype=np.float64), -1.0, 1.0)
    return np.sign(y) * np.expm1(np.abs(y) * np.log1p(mu)) / mu


def quantize(y, step: float) -> np.ndarray:
    """step * round(y / step) with round-half-to-even"""
    return step * np.round(np.asarray(y, dtype=np.float64) / step)


def quantize_codes(y, bits: int) -> np.ndarray:
    """
    Codes 0..2^b - 1 of the b-bit mid-rise quantizer over [-1, 1].

    Cell k spans [-1 + k*step, -1 + (k+1)*step]; y = 1 falls into the top cell.
    """
    step = 2.0 ** (1 - bits)
    codes = np.floor((np.asarray(y, dtype=np.float64) + 1.0) / step)
    return np.clip(codes, 0, 2 ** bits - 1).astype(np.int64)


def code_levels(codes, bits: int) -> np.ndarray:
    """Cell midpoints -1 + (k + 1/2) * step; every y in [-1, 1] is within step/2 of its level"""
    step = 2.0 ** (1 - bits)
    return -1.0 + (np.asarray(codes, dtype=np.float64) + 0.5) * step


@dataclass
class QuantizedCodeword:
    values: np.ndarray  # dequantized codeword, same shape as the input
    bits: int  # bits per codeword (one sample)
    clipped: int


def quantize_codeword(codeword: np.ndarray, spec: QuantizerSpec,
                      scale: Optional[float]) -> QuantizedCodeword:
    """
    Quantize [L] or [N, L] codewords after dividing by the stored codeword scale.

    The bit count is per sample and excludes magnitude feedback.
    """
    codeword = np.asarray(codeword, dtype=np.float64)
    length = codeword.shape[-1]
    if spec.passthrough:
        return QuantizedCodeword(codeword, length * PASSTHROUGH_BITS, 0)
    if scale is None or scale <= 0:
        raise ContractViolation("codeword scale missing; quantization needs the training-set maximum")

    counter = ClipCounter()
    y = codeword / scale
    if spec.mode == "mu_law":
        y = compand(y, spec.mu, counter)
    else:
        counter.observe(y)
        y = np.clip(y, -1.0, 1.0)
    y_hat = code_levels(quantize_codes(y, spec.bits), spec.bits)
    x_hat = expand(y_hat, spec.mu) if spec.mode == "mu_law" else y_hat
    if counter.count:
        logger.warning(f"{counter.count} codeword values exceeded the stored scale and saturated")
    return QuantizedCodeword(x_hat * scale, length * spec.bits, counter.count)


def quantization_nmse(x: np.ndarray, x_hat: np.ndarray) -> float:
    return float(np.sum((x - x_hat) ** 2) / np.sum(x ** 2))


def error_bound(spec: QuantizerSpec, y_hat: float) -> float:
    """(step/2) * max |d expand / dy| over the cell around y_hat"""
    if spec.mode == "uniform":
        return spec.step / 2.0
    upper = min(abs(y_hat) + spec.step / 2.0, 1.0)
    slope = np.log1p(spec.mu) * (1.0 + spec.mu) ** upper / spec.mu
    return spec.step / 2.0 * slope

