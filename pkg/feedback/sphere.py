"""
Spherical normalization: a CSI matrix is fed back as its Frobenius magnitude
and a unit-norm direction. Directions are scale free, so codecs trained on
them see the same input range whatever the UE path loss.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from data_acquisition.transform import RealCsiTensor
from utils.errors import ContractViolation, ZeroChannelError
from utils.logger import setup_logger

logger = setup_logger(__name__)

UNIT_TOLERANCE = 1e-6


@dataclass
class SphericalCsi:
    direction: np.ndarray  # [2, Rd, Nb], unit Frobenius norm
    magnitude: float


def _frobenius(x: np.ndarray) -> np.ndarray:
    """Per-sample Frobenius norm over the trailing three axes"""
    return np.sqrt(np.sum(x ** 2, axis=(-3, -2, -1)))


def split(csi: Union[RealCsiTensor, np.ndarray]) -> SphericalCsi:
    tensor = csi.tensor * csi.scale if isinstance(csi, RealCsiTensor) else np.asarray(csi, dtype=np.float64)
    norm = float(_frobenius(tensor))
    if norm == 0.0:
        raise ZeroChannelError("cannot split an all-zero CSI matrix")
    return SphericalCsi(tensor / norm, norm)


def merge(s: SphericalCsi) -> RealCsiTensor:
    if s.magnitude <= 0:
        raise ContractViolation(f"magnitude must be positive, got {s.magnitude}")
    norm = float(_frobenius(s.direction))
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise ContractViolation(f"direction norm {norm} is not 1")
    return RealCsiTensor(s.magnitude * s.direction, 1.0)


def split_batch(batch: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """[N, 2, Rd, Nb] -> (directions [N, 2, Rd, Nb], magnitudes [N])"""
    norms = _frobenius(batch)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroChannelError(f"{zero.size} all-zero CSI matrices (first index {zero[0]})")
    return batch / norms[:, None, None, None], norms


def merge_batch(directions: np.ndarray, magnitudes: np.ndarray) -> np.ndarray:
    """
    Scale estimated directions by their magnitudes.

    Decoded directions are not renormalized onto the sphere, so the per-sample
    direction MSE equals the NMSE of the merged estimate when the magnitude is exact.
    """
    return directions * np.asarray(magnitudes)[:, None, None, None]


class MagnitudeQuantizer:
    """Uniform quantizer of 20*log10(p) over [min_db, max_db] with mid-cell reconstruction levels"""

    def __init__(self, bits: int = 16, min_db: float = -60.0, max_db: float = 60.0):
        if not 1 <= bits <= 32:
            raise ContractViolation(f"magnitude bits must be in 1..32, got {bits}")
        if max_db <= min_db:
            raise ContractViolation("max_db must exceed min_db")
        self.bits = bits
        self.min_db = min_db
        self.max_db = max_db
        self.step_db = (max_db - min_db) / 2 ** bits

    def encode(self, magnitude) -> Tuple[np.ndarray, np.ndarray]:
        """Return (codes, saturated flags); out-of-range magnitudes saturate"""
        p = np.asarray(magnitude, dtype=np.float64)
        with np.errstate(divide="ignore"):
            db = 20.0 * np.log10(np.maximum(p, 0.0))
        saturated = (db < self.min_db) | (db > self.max_db)
        codes = np.floor((np.clip(db, self.min_db, self.max_db) - self.min_db) / self.step_db)
        codes = np.clip(codes, 0, 2 ** self.bits - 1).astype(np.int64)
        if np.any(saturated):
            logger.warning(f"{int(np.count_nonzero(saturated))} magnitudes saturated the "
                           f"[{self.min_db}, {self.max_db}] dB range")
        return codes, saturated

    def level_db(self, codes) -> np.ndarray:
        return self.min_db + (np.asarray(codes, dtype=np.float64) + 0.5) * self.step_db

    def decode(self, codes) -> np.ndarray:
        return 10.0 ** (self.level_db(codes) / 20.0)

    def roundtrip(self, magnitude) -> np.ndarray:
        return self.decode(self.encode(magnitude)[0])

    def to_dict(self) -> dict:
        return {"bits": self.bits, "min_db": self.min_db, "max_db": self.max_db}


def encode_magnitude(p: float, bits: int = 16, min_db: float = -60.0,
                     max_db: float = 60.0) -> Tuple[int, bool]:
    codes, saturated = MagnitudeQuantizer(bits, min_db, max_db).encode(p)
    return int(codes), bool(saturated)


def decode_magnitude(code: int, bits: int = 16, min_db: float = -60.0, max_db: float = 60.0) -> float:
    return float(MagnitudeQuantizer(bits, min_db, max_db).decode(code))
