import numpy as np
import pytest

from analysis.metrics import nmse, per_sample_nmse, to_db
from utils.errors import ContractViolation


def test_exact_reconstruction_is_minus_infinity(rng):
    h = rng.standard_normal((4, 2, 3, 3))
    result = nmse(h, h)
    assert result.linear == 0.0
    assert result.db == float("-inf")


def test_zero_reconstruction_is_zero_db(rng):
    h = rng.standard_normal((4, 2, 3, 3))
    result = nmse(h, np.zeros_like(h))
    assert result.linear == pytest.approx(1.0)
    assert result.db == pytest.approx(0.0, abs=1e-12)


def test_relative_perturbation_of_a_tenth_is_minus_20_db(rng):
    h = rng.standard_normal((4, 8, 8)) + 1j * rng.standard_normal((4, 8, 8))
    result = nmse(h, 1.1 * h)
    assert result.db == pytest.approx(-20.0, abs=1e-9)


def test_zero_energy_samples_are_excluded(rng):
    h = rng.standard_normal((5, 4))
    h[2] = 0.0
    ratios = per_sample_nmse(h, np.zeros_like(h))
    assert np.isnan(ratios[2])
    result = nmse(h, np.zeros_like(h))
    assert (result.samples, result.excluded) == (4, 1)
    assert result.linear == pytest.approx(1.0)


def test_all_zero_truth_is_undefined():
    with pytest.raises(ContractViolation):
        nmse(np.zeros((3, 4)), np.ones((3, 4)))


def test_shape_mismatch():
    with pytest.raises(ContractViolation):
        per_sample_nmse(np.ones((2, 3)), np.ones((3, 2)))


def test_to_db():
    assert to_db(0.01) == pytest.approx(-20.0)
    assert to_db(0.0) == float("-inf")
