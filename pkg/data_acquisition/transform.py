"""
Spatial-frequency <-> angular-delay transforms and complex <-> real CSI layouts.

The DFTs are explicit unitary matrices (scipy.linalg.dft with sqrt(n)
scaling), so unitarity and round trips can be checked to machine precision.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.linalg import dft

from utils.counters import ClipCounter
from utils.errors import ContractViolation
from utils.logger import setup_logger

logger = setup_logger(__name__)


@dataclass
class AngularDelayCsi:
    matrix: np.ndarray  # [Rd, Nb] complex

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.complex128)
        if self.matrix.ndim != 2:
            raise ContractViolation(f"angular-delay CSI must be 2-d, got {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix)):
            raise ContractViolation("angular-delay CSI has non-finite entries")


@dataclass
class RealCsiTensor:
    tensor: np.ndarray  # [2, Rd, Nb]: real part, imaginary part
    scale: float = 1.0


@lru_cache(maxsize=16)
def unitary_dft(n: int) -> np.ndarray:
    matrix = dft(n, scale="sqrtn")
    matrix.setflags(write=False)
    return matrix


def forward_dft(hf: np.ndarray) -> np.ndarray:
    """H_d = F_d^H H_f F_a over the last two axes ([..., Nf, Nb])"""
    hf = np.asarray(hf, dtype=np.complex128)
    if hf.ndim < 2:
        raise ContractViolation(f"expected [..., Nf, Nb], got {hf.shape}")
    nf, nb = hf.shape[-2:]
    return unitary_dft(nf).conj().T @ hf @ unitary_dft(nb)


def truncate(hd: np.ndarray, rows: int) -> np.ndarray:
    if rows < 1 or rows > hd.shape[-2]:
        raise ContractViolation(f"cannot keep {rows} of {hd.shape[-2]} delay rows")
    return hd[..., :rows, :]


def to_angular_delay(hf: np.ndarray, rd: int) -> AngularDelayCsi:
    return AngularDelayCsi(truncate(forward_dft(hf), rd))


def inverse_dft(hd: np.ndarray, nf: int) -> np.ndarray:
    """Zero-pad delay rows to Nf and return H_f = F_d H_d F_a^H"""
    hd = np.asarray(hd, dtype=np.complex128)
    rd, nb = hd.shape[-2:]
    if rd > nf:
        raise ContractViolation(f"Rd={rd} exceeds Nf={nf}")
    padded = np.zeros(hd.shape[:-2] + (nf, nb), dtype=np.complex128)
    padded[..., :rd, :] = hd
    return unitary_dft(nf) @ padded @ unitary_dft(nb).conj().T


def energy_ratio(hf: np.ndarray, rd: int) -> float:
    """Fraction of Frobenius energy kept by truncation to the first rd delay rows"""
    hd = forward_dft(hf)
    total = np.sum(np.abs(hd) ** 2)
    return float(np.sum(np.abs(truncate(hd, rd)) ** 2) / total) if total > 0 else 1.0


def to_real(csi: np.ndarray) -> np.ndarray:
    """[..., Rd, Nb] complex -> [..., 2, Rd, Nb] real"""
    csi = np.asarray(csi)
    return np.stack([csi.real, csi.imag], axis=-3).astype(np.float64)


def to_complex(real: np.ndarray) -> np.ndarray:
    if real.shape[-3] != 2:
        raise ContractViolation(f"expected a 2-channel real layout, got {real.shape}")
    return real[..., 0, :, :] + 1j * real[..., 1, :, :]


def complex_to_real(csi: AngularDelayCsi, scale: float = 1.0,
                    counter: Optional[ClipCounter] = None) -> RealCsiTensor:
    if scale <= 0:
        raise ContractViolation(f"range scale must be positive, got {scale}")
    tensor = to_real(csi.matrix) / scale
    if counter is not None:
        counter.observe(tensor)
    return RealCsiTensor(tensor, scale)


def real_to_complex(real: RealCsiTensor) -> AngularDelayCsi:
    if real.scale <= 0:
        raise ContractViolation(f"range scale must be positive, got {real.scale}")
    return AngularDelayCsi(to_complex(real.tensor * real.scale))


class RangeNormalizer:
    """
    Maps real CSI into [-1, 1] with one scale taken from the training set.

    Held-out values beyond the training maximum are counted, never clipped.
    """

    def __init__(self, scale: Optional[float] = None):
        self.scale = scale
        self.clips = ClipCounter()

    def fit(self, real: np.ndarray) -> "RangeNormalizer":
        scale = float(np.max(np.abs(real)))
        if scale <= 0:
            raise ContractViolation("cannot fit a range scale on all-zero data")
        self.scale = scale
        return self

    def normalize(self, real: np.ndarray) -> np.ndarray:
        if self.scale is None or self.scale <= 0:
            raise ContractViolation("range normalizer has no positive scale")
        out = real / self.scale
        outside = self.clips.observe(out)
        if outside:
            logger.warning(f"{outside} values outside [-1, 1] after range normalization "
                           f"({self.clips.fraction:.2%} of all normalized values)")
        return out

    def denormalize(self, normalized: np.ndarray) -> np.ndarray:
        if self.scale is None or self.scale <= 0:
            raise ContractViolation("range normalizer has no positive scale")
        return normalized * self.scale
