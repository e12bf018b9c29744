"""
Reference codecs and closed-form baselines the learned codecs are checked against.
"""

from dataclasses import dataclass

import numpy as np

from utils.errors import ContractViolation


class IdentityCodec:
    """Lossless stand-in: the codeword is the flattened input"""

    def __init__(self, rd: int, nb: int):
        self.rd = rd
        self.nb = nb
        self.scale = None
        self.codeword_scale = 1.0

    @property
    def latent_dim(self) -> int:
        return 2 * self.rd * self.nb

    def encode(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1:] != (2, self.rd, self.nb):
            raise ContractViolation(f"identity codec input must be [N, 2, {self.rd}, {self.nb}], got {x.shape}")
        return x.reshape(x.shape[0], -1).copy()

    def decode(self, codeword: np.ndarray) -> np.ndarray:
        codeword = np.asarray(codeword, dtype=np.float64)
        if codeword.ndim != 2 or codeword.shape[1] != self.latent_dim:
            raise ContractViolation(f"codeword must be [N, {self.latent_dim}], got {codeword.shape}")
        return codeword.reshape(-1, 2, self.rd, self.nb).copy()

    def fit_codeword_scale(self, x: np.ndarray) -> float:
        self.codeword_scale = float(np.max(np.abs(x)))
        return self.codeword_scale

    def clone(self) -> "IdentityCodec":
        twin = IdentityCodec(self.rd, self.nb)
        twin.scale, twin.codeword_scale = self.scale, self.codeword_scale
        return twin


@dataclass
class PcaOracle:
    latent_dim: int
    components: np.ndarray  # [D, latent], orthonormal columns
    eigenvalues: np.ndarray  # descending, all D
    reconstruction_error: float  # mean per-sample squared error of the projection


def pca_oracle(samples: np.ndarray, latent_dim: int) -> PcaOracle:
    """
    Best rank-latent_dim linear reconstruction of samples [K, ...] under squared error.

    Uses the uncentered second-moment matrix, which is what a bias-free linear
    autoencoder can reach.
    """
    x = np.asarray(samples, dtype=np.float64).reshape(len(samples), -1)
    if not 1 <= latent_dim <= x.shape[1]:
        raise ContractViolation(f"latent_dim {latent_dim} outside 1..{x.shape[1]}")
    moment = x.T @ x / x.shape[0]
    eigenvalues, vectors = np.linalg.eigh(moment)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues, vectors = eigenvalues[order], vectors[:, order]
    components = vectors[:, :latent_dim]
    residual = x - (x @ components) @ components.T
    error = float(np.mean(np.sum(residual ** 2, axis=1)))
    return PcaOracle(latent_dim, components, eigenvalues, error)
