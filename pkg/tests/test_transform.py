import numpy as np
import pytest

from data_acquisition.transform import (
    AngularDelayCsi, RangeNormalizer, RealCsiTensor, complex_to_real, energy_ratio, forward_dft,
    inverse_dft, real_to_complex, to_angular_delay, to_complex, to_real, unitary_dft,
)
from utils.counters import ClipCounter
from utils.errors import ContractViolation


def complex_normal(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.mark.parametrize("n", [1, 8, 32])
def test_dft_is_unitary(n):
    f = unitary_dft(n)
    np.testing.assert_allclose(f.conj().T @ f, np.eye(n), atol=1e-12)


def test_forward_preserves_energy(rng):
    hf = complex_normal(rng, (64, 8))
    assert np.linalg.norm(forward_dft(hf)) == pytest.approx(np.linalg.norm(hf), rel=1e-12)


def test_inverse_undoes_forward_without_truncation(rng):
    hf = complex_normal(rng, (3, 16, 4))
    np.testing.assert_allclose(inverse_dft(forward_dft(hf), 16), hf, atol=1e-12)


def test_truncation_keeps_delay_limited_channels(rng):
    hd = np.zeros((64, 8), dtype=complex)
    hd[:8] = complex_normal(rng, (8, 8))
    hf = inverse_dft(hd[:8], 64)
    assert energy_ratio(hf, 8) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(to_angular_delay(hf, 8).matrix, hd[:8], atol=1e-12)
    assert energy_ratio(hf, 4) < 1.0


def test_bad_truncation_and_layouts(rng):
    with pytest.raises(ContractViolation):
        to_angular_delay(complex_normal(rng, (8, 4)), 9)
    with pytest.raises(ContractViolation):
        inverse_dft(np.zeros((9, 4)), 8)
    with pytest.raises(ContractViolation):
        to_complex(np.zeros((3, 4, 4)))
    with pytest.raises(ContractViolation):
        AngularDelayCsi(np.array([[np.inf]]))


def test_real_layout_round_trip(rng):
    csi = complex_normal(rng, (5, 8, 4))
    real = to_real(csi)
    assert real.shape == (5, 2, 8, 4)
    np.testing.assert_array_equal(to_complex(real), csi)


def test_scaled_real_tensor_round_trip(rng):
    csi = AngularDelayCsi(complex_normal(rng, (8, 4)))
    counter = ClipCounter()
    real = complex_to_real(csi, scale=0.5, counter=counter)
    assert counter.count > 0
    np.testing.assert_allclose(real_to_complex(real).matrix, csi.matrix, atol=1e-12)
    with pytest.raises(ContractViolation):
        complex_to_real(csi, scale=0.0)
    with pytest.raises(ContractViolation):
        real_to_complex(RealCsiTensor(real.tensor, -1.0))


def test_range_normalizer_counts_held_out_overflow(rng):
    train = rng.standard_normal((20, 2, 4, 4))
    normalizer = RangeNormalizer().fit(train)
    assert np.max(np.abs(normalizer.normalize(train))) == pytest.approx(1.0)
    assert normalizer.clips.count == 0

    held_out = 2.0 * normalizer.scale * np.ones((1, 2, 4, 4))
    out = normalizer.normalize(held_out)
    assert normalizer.clips.count == held_out.size
    assert normalizer.clips.fraction == pytest.approx(held_out.size / (train.size + held_out.size))
    np.testing.assert_allclose(out, 2.0)
    np.testing.assert_allclose(normalizer.denormalize(out), held_out)


def test_range_normalizer_needs_a_scale():
    with pytest.raises(ContractViolation):
        RangeNormalizer().normalize(np.ones(3))
    with pytest.raises(ContractViolation):
        RangeNormalizer().fit(np.zeros(3))
