import numpy as np
import pytest

from experiments.runner import identity_check, oracle_check, pca_check
from feedback.oracles import IdentityCodec, pca_oracle
from utils.errors import ContractViolation


def test_identity_codec_is_lossless(rng):
    codec = IdentityCodec(4, 3)
    x = rng.standard_normal((5, 2, 4, 3))
    assert codec.encode(x).shape == (5, 24)
    np.testing.assert_array_equal(codec.decode(codec.encode(x)), x)
    with pytest.raises(ContractViolation):
        codec.encode(np.zeros((5, 2, 3, 4)))


def test_pca_error_is_the_discarded_spectrum(rng):
    spectrum = np.array([5.0, 4.0, 3.0, 0.2, 0.1, 0.05])
    basis, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    data = (rng.standard_normal((50_000, 6)) * np.sqrt(spectrum)) @ basis.T
    oracle = pca_oracle(data, 3)
    np.testing.assert_allclose(oracle.components.T @ oracle.components, np.eye(3), atol=1e-12)
    assert oracle.reconstruction_error == pytest.approx(oracle.eigenvalues[3:].sum(), rel=1e-9)
    assert oracle.reconstruction_error == pytest.approx(0.35, rel=0.05)


def test_pca_latent_range(rng):
    with pytest.raises(ContractViolation):
        pca_oracle(rng.standard_normal((10, 4)), 5)


def test_identity_pipeline_has_zero_error(small_dataset):
    assert all(value <= 1e-20 for value in identity_check(small_dataset))


def test_linear_codec_approaches_pca():
    result = pca_check(seed=0)
    assert result["codec_error"] >= result["pca_error"] * (1 - 1e-6)
    assert result["relative_gap"] <= 0.10


def test_oracle_table(small_dataset):
    table = oracle_check(small_dataset, gradcheck_seeds=2)
    assert list(table["oracle"]) == ["finite_difference_gradients", "identity_codec_nmse", "linear_codec_vs_pca"]
    assert table["passed"].all()
