import numpy as np
import pytest

from analysis.metrics import per_sample_nmse
from data_acquisition.transform import RealCsiTensor
from feedback.sphere import (
    MagnitudeQuantizer, SphericalCsi, decode_magnitude, encode_magnitude, merge, merge_batch, split,
    split_batch,
)
from utils.errors import ContractViolation, ZeroChannelError


def test_split_then_merge_restores_the_matrix(rng):
    tensor = rng.standard_normal((2, 4, 4))
    s = split(RealCsiTensor(tensor / 3.0, 3.0))
    assert np.linalg.norm(s.direction) == pytest.approx(1.0)
    np.testing.assert_allclose(merge(s).tensor, tensor, atol=1e-12)


def test_direction_is_scale_free(rng):
    tensor = rng.standard_normal((2, 4, 4))
    np.testing.assert_allclose(split(tensor).direction, split(1e4 * tensor).direction, atol=1e-12)


def test_zero_matrix_cannot_be_split():
    with pytest.raises(ZeroChannelError):
        split(np.zeros((2, 4, 4)))
    batch = np.ones((3, 2, 2, 2))
    batch[1] = 0.0
    with pytest.raises(ZeroChannelError):
        split_batch(batch)


def test_merge_rejects_bad_parts():
    direction = np.zeros((2, 2, 2))
    direction[0, 0, 0] = 1.0
    with pytest.raises(ContractViolation):
        merge(SphericalCsi(direction, 0.0))
    with pytest.raises(ContractViolation):
        merge(SphericalCsi(2.0 * direction, 1.0))


def test_batch_split_and_merge(rng):
    batch = rng.standard_normal((6, 2, 3, 3)) * rng.uniform(0.01, 100.0, (6, 1, 1, 1))
    directions, magnitudes = split_batch(batch)
    np.testing.assert_allclose(np.linalg.norm(directions.reshape(6, -1), axis=1), 1.0)
    np.testing.assert_allclose(merge_batch(directions, magnitudes), batch)


def test_magnitude_error_within_half_step_in_db(rng):
    quantizer = MagnitudeQuantizer(bits=8)
    p = 10 ** rng.uniform(-2, 2, 500)
    error_db = np.abs(20 * np.log10(quantizer.roundtrip(p)) - 20 * np.log10(p))
    assert np.all(error_db <= quantizer.step_db / 2 + 1e-9)


def test_magnitudes_over_40_db_stay_within_one_percent():
    p = np.logspace(-1, 1, 401)
    quantizer = MagnitudeQuantizer(bits=8, min_db=-20.0, max_db=20.0)
    relative = np.abs(quantizer.roundtrip(p) - p) / p
    assert relative.max() < 0.01


def test_out_of_range_magnitudes_saturate():
    quantizer = MagnitudeQuantizer(bits=8)
    codes, saturated = quantizer.encode([1e-5, 1.0, 1e5])
    assert saturated.tolist() == [True, False, True]
    assert codes[0] == 0 and codes[2] == 2 ** 8 - 1


def test_scalar_helpers_agree_with_the_quantizer():
    code, saturated = encode_magnitude(100.0)
    assert not saturated
    assert decode_magnitude(code) == pytest.approx(100.0, rel=1e-3)


@pytest.mark.parametrize("kwargs", [{"bits": 0}, {"bits": 33}, {"min_db": 10.0, "max_db": 0.0}])
def test_magnitude_quantizer_validation(kwargs):
    with pytest.raises(ContractViolation):
        MagnitudeQuantizer(**kwargs)


def test_direction_error_equals_the_merged_nmse(rng):
    batch = rng.standard_normal((6, 2, 4, 4)) * rng.uniform(0.1, 100.0, (6, 1, 1, 1))
    directions, magnitudes = split_batch(batch)
    estimates = directions + 0.05 * rng.standard_normal(directions.shape)
    direction_error = np.sum((directions - estimates) ** 2, axis=(1, 2, 3))
    np.testing.assert_allclose(per_sample_nmse(batch, merge_batch(estimates, magnitudes)),
                               direction_error, rtol=1e-10)


def test_magnitude_on_a_reconstruction_level_round_trips_exactly():
    quantizer = MagnitudeQuantizer(bits=16)
    levels = quantizer.decode(np.array([0, 1234, 40000, 2 ** 16 - 1]))
    np.testing.assert_array_equal(quantizer.roundtrip(levels), levels)
