import pandas as pd
import pytest
from pydantic import ValidationError
from sqlalchemy import create_engine

from data_acquisition.channel_model import generate, preset_config
from database.database import check_connection
from database.models import ExperimentRun, SlotResult
from experiments.manifest import ExperimentManifest, load_manifest, parse_ratio, save_manifest
from experiments.reports import read_header, read_report, write_report
from experiments.runner import cost_report, open_registry, quant_sweep, run_experiment, sweep_summary
from feedback.markovnet import MarkovNetPipeline, TrainingSchedule, train_pipeline
from feedback.oracles import IdentityCodec
from utils.errors import ConfigurationError, DatasetIOError


def tiny_manifest(**overrides) -> ExperimentManifest:
    fields = dict(
        name="tiny",
        train_samples=40,
        test_samples=20,
        slots=10,
        channel={"rd": 8, "nb": 8, "nf": 64, "num_paths": 8},
        cr2=[1 / 4, 1 / 16, 1 / 64],
        codec={"encoder_widths": [4, 2], "decoder_widths": [4, 2], "kernel_size": 3},
        schedule=TrainingSchedule(epochs_slot1=1, epochs_scratch=1, epochs_warm=1, batch_size=20),
        seed=3,
    )
    fields.update(overrides)
    return ExperimentManifest(**fields)


@pytest.mark.parametrize("text,expected", [("1/16", 1 / 16), ("0.25", 1 / 4), (64, 1 / 64), (0.125, 1 / 8)])
def test_parse_ratio(text, expected):
    assert parse_ratio(text) == expected


def test_parse_ratio_rejects_unknown_ratios():
    with pytest.raises(ConfigurationError):
        parse_ratio("1/3")


def test_manifest_hash_is_stable():
    a, b = tiny_manifest(), tiny_manifest()
    assert a.manifest_hash() == b.manifest_hash()
    assert len(a.manifest_hash()) == 12
    assert tiny_manifest(seed=4).manifest_hash() != a.manifest_hash()


def test_manifest_validation():
    with pytest.raises(ValidationError):
        tiny_manifest(cr2=[])
    with pytest.raises(ValidationError):
        tiny_manifest(cr1=0.3)
    with pytest.raises(ValidationError):
        tiny_manifest(preset="walking")


def test_test_split_uses_the_next_seed():
    manifest = tiny_manifest()
    assert manifest.channel_config("train").seed == 3
    assert manifest.channel_config("test").seed == 4
    assert manifest.channel_config().rd == 8
    assert manifest.sample_counts == (40, 20)


def test_manifest_files(tmp_path):
    manifest = tiny_manifest()
    path = save_manifest(manifest, tmp_path / "tiny.json")
    assert load_manifest(path) == manifest
    with pytest.raises(DatasetIOError):
        load_manifest(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_manifest(broken)


def test_report_header_round_trip(tmp_path):
    path = write_report(pd.DataFrame({"slot": [1, 2], "nmse_db": [-10.5, -12.25]}), tmp_path / "r.csv",
                        {"manifest_hash": "abc123", "seed": 7})
    header = read_header(path)
    assert header["report_version"] == "1"
    assert header["manifest_hash"] == "abc123"
    assert "numpy" in header
    assert read_report(path)["nmse_db"].tolist() == [-10.5, -12.25]


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("reports")
    return run_experiment(tiny_manifest(), out), out


def test_experiment_report_rows(tiny_run):
    result, _ = tiny_run
    report = result.report
    assert len(report) == 30
    assert list(report["pipeline"].unique()) == ["MarkovNet 1/4-1/4", "MarkovNet 1/4-1/16", "MarkovNet 1/4-1/64"]
    assert list(report["slot"][:10]) == list(range(1, 11))
    assert report["gamma_hat"].nunique() == 1
    assert result.report_path.name == f"tiny_{result.manifest_hash}.csv"


def test_fp32_feedback_bits(tiny_run):
    report = tiny_run[0].report
    rows = report[report["pipeline"] == "MarkovNet 1/4-1/64"]
    # 2*8*8 real inputs; slot 1 at 1/4 gives 32 values, later slots at 1/64 give 2
    assert rows["feedback_bits"].tolist() == [32 * 32 + 16] + [2 * 32 + 16] * 9


def test_rerun_writes_identical_bytes(tiny_run, tmp_path):
    result, _ = tiny_run
    again = run_experiment(tiny_manifest(), tmp_path)
    assert again.report_path.read_bytes() == result.report_path.read_bytes()
    assert read_header(again.report_path)["manifest_hash"] == result.manifest_hash


def test_runs_are_recorded(registry, tmp_path):
    manifest = tiny_manifest(cr2=[1 / 16], slots=3)
    result = run_experiment(manifest, tmp_path, session=registry)
    run = registry.query(ExperimentRun).one()
    assert run.id == result.run_id
    assert run.manifest_hash == manifest.manifest_hash()
    assert run.manifest["cr2"] == [1 / 16]
    assert registry.query(SlotResult).count() == 3
    assert sorted(row.slot for row in run.slots) == [1, 2, 3]


def test_registry_opens_on_a_reachable_engine():
    session = open_registry(create_engine("sqlite://"))
    try:
        assert session.query(ExperimentRun).count() == 0
    finally:
        session.close()


def test_unreachable_registry_is_reported(tmp_path):
    path = tmp_path / "missing" / "runs.db"
    engine = create_engine(f"sqlite:///{path}")
    assert not check_connection(engine)
    with pytest.raises(DatasetIOError):
        open_registry(engine)


def test_baselines_and_quantizers_add_rows(tmp_path):
    manifest = tiny_manifest(cr2=[1 / 16], slots=3, baselines=["independent", "csinet_pro"],
                             quantizers=[{"bits": 6}])
    report = run_experiment(manifest, tmp_path).report
    assert list(report["pipeline"].unique()) == ["MarkovNet 1/4-1/16", "CsiNet Pro fc 1/4-1/16", "SphNet fc 1/16"]
    assert set(report["quantizer"]) == {"fp32", "mu_law6"}
    assert len(report) == 3 * 3 * 2


def test_quantization_sweep_degrades_with_fewer_bits(small_dataset):
    rd, nb = small_dataset.samples.shape[2:]
    pipeline = MarkovNetPipeline(IdentityCodec(rd, nb), [IdentityCodec(rd, nb) for _ in range(3)], gamma=0.9)
    sweep = quant_sweep(pipeline, small_dataset)
    summary = sweep_summary(sweep).set_index(["mode", "bits"])["degradation_db"]
    for mode in ("mu_law", "uniform"):
        assert summary[(mode, 32)] == 0.0
        assert summary[(mode, 6)] < summary[(mode, 4)]
    assert len(summary) == 6


def test_cost_report_file(tmp_path):
    table = cost_report(tmp_path / "cost.csv", heads=("cnn",))
    assert len(table) == 5
    header = read_header(tmp_path / "cost.csv")
    assert "flop_convention" in header
    assert read_report(tmp_path / "cost.csv")["params"].tolist() == table["params"].tolist()


@pytest.mark.slow
def test_six_bit_mu_law_costs_under_a_decibel_on_the_fast_preset():
    train = generate(preset_config("fast", slots=5, seed=31), 5000, progress=False)
    test = generate(preset_config("fast", slots=5, seed=32), 1000, progress=False)
    pipeline = train_pipeline(train, 1 / 4, 1 / 16,
                              TrainingSchedule(epochs_slot1=300, epochs_scratch=300, epochs_warm=100),
                              progress=False)
    summary = sweep_summary(quant_sweep(pipeline, test)).set_index(["mode", "bits"])["degradation_db"]
    assert summary[("mu_law", 6)] <= 1.0
    for mode in ("mu_law", "uniform"):
        assert summary[(mode, 6)] < summary[(mode, 4)]
