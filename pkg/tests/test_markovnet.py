import numpy as np
import pytest

from data_acquisition.channel_model import ChannelConfig, CsiSequence, generate, preset_config
from feedback.codec import build
from feedback.markovnet import (
    MarkovNetPipeline, TrainingSchedule, estimate_gamma, evaluate, load_pipeline, residual_energy_ratio,
    save_pipeline, train_independent, train_pipeline,
)
from feedback.oracles import IdentityCodec
from feedback.quantizer import QuantizerSpec
from utils.errors import ContractViolation, DatasetIOError, ZeroChannelError

QUICK = TrainingSchedule(epochs_slot1=2, epochs_scratch=2, epochs_warm=1, batch_size=20, learning_rate=1e-2)


def constant_sequence(dataset: CsiSequence) -> CsiSequence:
    """Every slot repeats slot 1"""
    samples = np.repeat(dataset.samples[:, :1], dataset.num_slots, axis=1)
    return CsiSequence(samples, dataset.power_scales, dataset.sample_seeds, dataset.config)


def identity_pipeline(dataset: CsiSequence, **kwargs) -> MarkovNetPipeline:
    rd, nb = dataset.samples.shape[2:]
    kwargs.setdefault("gamma", estimate_gamma(dataset).gamma_hat)
    return MarkovNetPipeline(IdentityCodec(rd, nb), [IdentityCodec(rd, nb) for _ in range(dataset.num_slots - 1)],
                             **kwargs)


def random_pipeline(config, slots: int, gamma: float = 0.9) -> MarkovNetPipeline:
    codecs = []
    for seed in range(slots):
        codec = build(config.model_copy(update={"compression_ratio": 1 / 4 if seed == 0 else 1 / 16}), seed)
        codec.scale, codec.codeword_scale = 1.0, 1.0
        codecs.append(codec)
    return MarkovNetPipeline(codecs[0], codecs[1:], gamma=gamma)


def test_gamma_of_a_frozen_channel_is_one(small_dataset):
    assert estimate_gamma(constant_sequence(small_dataset)).gamma_hat == pytest.approx(1.0)


@pytest.mark.parametrize("gamma", [0.0, 0.9, 0.95, 0.99])
def test_gamma_estimate_recovers_the_ar_coefficient(gamma):
    config = ChannelConfig(nb=8, nf=64, rd=8, gamma_true=gamma, num_paths=8, slots=4, seed=11)
    estimate = estimate_gamma(generate(config, 2000, progress=False))
    tolerance = 3 / np.sqrt(2000 * 3) if gamma == 0.0 else 0.01
    assert estimate.gamma_hat == pytest.approx(gamma, abs=tolerance)
    assert estimate.sample_count == 2000 * 3


def test_gamma_needs_two_slots_and_energy(small_dataset):
    with pytest.raises(ContractViolation):
        estimate_gamma(CsiSequence(small_dataset.samples[:, :1], small_dataset.power_scales,
                                   small_dataset.sample_seeds))
    zeros = CsiSequence(np.zeros((2, 3, 2, 2), dtype=complex), np.ones(2), np.zeros(2, dtype=np.uint32))
    with pytest.raises(ContractViolation):
        estimate_gamma(zeros)


def test_pipeline_validates_gamma_and_residual_latents(small_codec):
    with pytest.raises(ContractViolation):
        MarkovNetPipeline(IdentityCodec(8, 8), gamma=1.5)
    mixed = [build(small_codec.model_copy(update={"compression_ratio": r})) for r in (1 / 4, 1 / 16)]
    with pytest.raises(ContractViolation):
        MarkovNetPipeline(IdentityCodec(8, 8), mixed)


def test_identity_slot1_is_exact_up_to_the_magnitude_step(small_dataset):
    pipeline = identity_pipeline(small_dataset)
    h1 = small_dataset.slot(1)
    recon = pipeline.decode_slot1(pipeline.encode_slot1(h1))
    relative = np.linalg.norm((recon - h1).reshape(len(h1), -1), axis=1) / np.linalg.norm(h1.reshape(len(h1), -1), axis=1)
    half_step = 10 ** (pipeline.magnitude_quantizer.step_db / 40) - 1
    assert np.all(relative <= half_step + 1e-12)


def test_identity_codecs_reconstruct_every_slot(small_dataset):
    pipeline = identity_pipeline(small_dataset, magnitude_quantizer=None)
    for result in evaluate(pipeline, small_dataset):
        assert result.nmse.linear < 1e-20


def test_reconstruction_telescopes_over_residuals(small_codec, small_dataset):
    pipeline = random_pipeline(small_codec, small_dataset.num_slots, gamma=0.8)
    payloads, recon = pipeline.encode_sequence(small_dataset.samples)
    zeros = np.zeros_like(small_dataset.slot(1))
    residuals = [pipeline.decode_slot1(payloads[0])]
    residuals += [pipeline.decode_slot(t, payloads[t - 1], zeros) for t in range(2, len(payloads) + 1)]
    for t in range(1, len(payloads) + 1):
        expected = sum(0.8 ** (t - tau) * residuals[tau - 1] for tau in range(1, t + 1))
        np.testing.assert_allclose(recon[:, t - 1], expected, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("spec", [None, QuantizerSpec(bits=4), QuantizerSpec(bits=6, mode="uniform")])
def test_decoder_replica_matches_the_gnb_bit_for_bit(small_codec, small_dataset, spec):
    pipeline = random_pipeline(small_codec, small_dataset.num_slots).with_quantizer(spec)
    payloads, ue_side = pipeline.encode_sequence(small_dataset.samples)
    np.testing.assert_array_equal(pipeline.decode_sequence(payloads), ue_side)


def test_zero_residual_reconstructs_exactly_without_the_sphere(small_dataset):
    frozen = constant_sequence(small_dataset)
    pipeline = identity_pipeline(frozen, gamma=1.0, spherical_slot1=False, spherical_residual=False)
    for result in evaluate(pipeline, frozen):
        assert result.nmse.linear == 0.0
        assert result.nmse.db == float("-inf")


def test_zero_residual_cannot_be_split(small_dataset):
    frozen = constant_sequence(small_dataset)
    pipeline = identity_pipeline(frozen, gamma=1.0, spherical_slot1=False)
    with pytest.raises(ZeroChannelError):
        evaluate(pipeline, frozen)


def test_slot_indices_are_checked(small_dataset):
    pipeline = identity_pipeline(small_dataset)
    h = small_dataset.slot(1)
    with pytest.raises(ContractViolation):
        pipeline.encode_slot(1, h, h)
    with pytest.raises(ContractViolation):
        pipeline.encode_slot(pipeline.slots + 1, h, h)
    longer = np.concatenate([small_dataset.samples, small_dataset.samples[:, :1]], axis=1)
    with pytest.raises(ContractViolation):
        pipeline.encode_sequence(longer)
    with pytest.raises(ContractViolation):
        pipeline.encode_slot1(small_dataset.samples)


def test_feedback_bits_per_slot(small_codec, small_dataset):
    pipeline = random_pipeline(small_codec, small_dataset.num_slots)
    fp32 = evaluate(pipeline, small_dataset)
    assert fp32[0].bits == 32 * 32 + 16
    assert fp32[1].bits == 32 * 8 + 16
    six = evaluate(pipeline, small_dataset, QuantizerSpec(bits=6))
    assert six[0].bits == 8 * 32 + 16  # slot 1 never drops below 8 bits
    assert six[1].bits == 6 * 8 + 16


def test_spherical_pipeline_ignores_channel_scale(small_codec, small_dataset):
    pipeline = random_pipeline(small_codec, small_dataset.num_slots)
    pipeline.magnitude_quantizer = None
    louder = CsiSequence(100.0 * small_dataset.samples, small_dataset.power_scales, small_dataset.sample_seeds)
    for a, b in zip(evaluate(pipeline, small_dataset), evaluate(pipeline, louder)):
        assert a.nmse.linear == pytest.approx(b.nmse.linear, rel=1e-9)


def test_residual_energy_matches_the_innovation_power_with_a_perfect_prefix():
    dataset = generate(ChannelConfig(nb=8, nf=64, rd=8, gamma_true=0.95, num_paths=32, slots=6,
                                     power_spread_db=0.0, seed=9), 2000, progress=False)
    gamma = estimate_gamma(dataset).gamma_hat
    ratios = residual_energy_ratio(dataset.samples, dataset.samples, gamma)
    assert ratios.shape == (dataset.num_slots - 1,)
    np.testing.assert_allclose(ratios, 1.0 - gamma ** 2, rtol=0.1)


def test_two_slot_training_runs_twice(small_dataset, small_codec):
    short = CsiSequence(small_dataset.samples[:, :2], small_dataset.power_scales, small_dataset.sample_seeds)
    pipeline = train_pipeline(short, schedule=QUICK, codec_template=small_codec, progress=False)
    assert [run.slot for run in pipeline.training_runs] == [1, 2]
    assert not pipeline.training_runs[1].warm_start
    assert pipeline.slots == 2


def test_training_schedule_and_warm_starts(small_dataset, small_codec):
    schedule = QUICK.model_copy(update={"epochs_warm": 0})
    pipeline = train_pipeline(small_dataset, schedule=schedule, codec_template=small_codec, progress=False)
    runs = pipeline.training_runs
    assert [(r.slot, r.epochs, r.warm_start) for r in runs] == [(1, 2, False), (2, 2, False), (3, 0, True), (4, 0, True)]
    assert pipeline.slot1_codec.latent_dim == 32
    assert {codec.latent_dim for codec in pipeline.residual_codecs} == {8}
    # Zero warm epochs leave each later codec a copy of slot 2
    for codec in pipeline.residual_codecs[1:]:
        assert codec is not pipeline.residual_codecs[0]
        for p, q in zip(codec.parameters(), pipeline.residual_codecs[0].parameters()):
            np.testing.assert_array_equal(p.data, q.data)
    assert 0.0 <= pipeline.gamma <= 1.0


def test_single_slot_training_has_no_residuals(small_dataset, small_codec):
    single = CsiSequence(small_dataset.samples[:, :1], small_dataset.power_scales, small_dataset.sample_seeds)
    pipeline = train_pipeline(single, schedule=QUICK, codec_template=small_codec, progress=False)
    assert pipeline.slots == 1 and pipeline.gamma == 0.0


def test_independent_baseline_ignores_the_previous_slot(small_dataset, small_codec):
    pipeline = train_independent(small_dataset, schedule=QUICK, codec_template=small_codec, progress=False)
    assert pipeline.gamma == 0.0
    assert pipeline.slot1_codec.latent_dim == 8


def test_save_and_load_round_trip(tmp_path, small_dataset, small_codec):
    pipeline = train_pipeline(small_dataset, schedule=QUICK, codec_template=small_codec, progress=False,
                              checkpoint_dir=tmp_path / "ckpt")
    assert (tmp_path / "ckpt" / "slot1.ckpt").exists()
    save_pipeline(pipeline, tmp_path / "run")
    loaded = load_pipeline(tmp_path / "run")
    assert loaded.gamma == pipeline.gamma
    assert loaded.slots == pipeline.slots
    np.testing.assert_array_equal(loaded.reconstruct(small_dataset.samples), pipeline.reconstruct(small_dataset.samples))


def test_save_and_load_reject_bad_inputs(tmp_path, small_dataset):
    with pytest.raises(ContractViolation):
        save_pipeline(identity_pipeline(small_dataset), tmp_path / "identity")
    with pytest.raises(DatasetIOError):
        load_pipeline(tmp_path / "nothing")


# Desk-scale acceptance runs (hours on a laptop CPU)

DESK = TrainingSchedule(epochs_slot1=300, epochs_scratch=300, epochs_warm=100)


@pytest.fixture(scope="module")
def slow_data():
    train = generate(preset_config("slow", slots=7, seed=21), 5000, progress=False)
    test = generate(preset_config("slow", slots=7, seed=22), 1000, progress=False)
    return train, test


@pytest.fixture(scope="module")
def slow_markovnet(slow_data):
    return train_pipeline(slow_data[0], 1 / 4, 1 / 16, DESK, progress=False)


@pytest.mark.slow
def test_differential_feedback_beats_independent_slots(slow_data, slow_markovnet):
    train, test = slow_data
    baseline = train_independent(train, 1 / 16, DESK, progress=False)
    markov = [r.nmse.db for r in evaluate(slow_markovnet, test)][1:]
    independent = [r.nmse.db for r in evaluate(baseline, test)][1:]
    assert all(m < i for m, i in zip(markov, independent))
    assert np.mean(independent) - np.mean(markov) >= 3.0


@pytest.mark.slow
def test_slot1_codec_reaches_minus_10_db(slow_data, slow_markovnet):
    assert evaluate(slow_markovnet, slow_data[1])[0].nmse.db <= -10.0


@pytest.mark.slow
def test_residual_energy_stays_within_the_innovation_plus_slot1_error(slow_data, slow_markovnet):
    test = slow_data[1]
    gamma = slow_markovnet.gamma
    recon = slow_markovnet.reconstruct(test.samples)
    first = test.samples[:, 0]
    slot1_error = np.sum(np.abs(first - recon[:, 0]) ** 2) / np.sum(np.abs(first) ** 2)
    ratio = residual_energy_ratio(test.samples, recon, gamma)[0]
    assert ratio <= 1.1 * ((1.0 - gamma ** 2) + gamma ** 2 * slot1_error)


@pytest.mark.slow
def test_warm_starts_begin_near_the_previous_slot_loss(slow_markovnet):
    runs = slow_markovnet.training_runs
    for previous, current in zip(runs[1:], runs[2:]):
        assert current.warm_start
        assert current.history[0] <= 1.5 * previous.history[-1]


@pytest.mark.slow
def test_warm_started_slots_track_the_scratch_slot(slow_data, slow_markovnet):
    results = evaluate(slow_markovnet, slow_data[1])
    scratch = results[1].nmse.linear
    assert all(r.nmse.linear <= 1.5 * scratch for r in results[2:])


@pytest.mark.slow
def test_spherical_normalization_beats_global_scaling(slow_data):
    train, test = (CsiSequence(d.samples[:, :1], d.power_scales, d.sample_seeds, d.config) for d in slow_data)
    sphere = train_pipeline(train, 1 / 4, schedule=DESK, spherical=True, progress=False)
    naive = train_pipeline(train, 1 / 4, schedule=DESK, spherical=False, progress=False)
    assert evaluate(naive, test)[0].nmse.db - evaluate(sphere, test)[0].nmse.db >= 2.0


@pytest.mark.slow
def test_cnn_head_keeps_up_with_the_fc_head(slow_data, slow_markovnet):
    cnn = train_pipeline(slow_data[0], 1 / 4, 1 / 16, DESK, latent_head="cnn", progress=False)
    for fc_row, cnn_row in zip(evaluate(slow_markovnet, slow_data[1]), evaluate(cnn, slow_data[1])):
        assert abs(fc_row.nmse.db - cnn_row.nmse.db) <= 2.0
