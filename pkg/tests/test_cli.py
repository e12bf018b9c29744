import pytest

from data_acquisition.dataset_store import load_dataset
from main import main

SMALL = ["--samples", "6", "--slots", "2", "--rd", "8", "--nb", "8", "--num-paths", "4"]


def test_cost_report(tmp_path):
    assert main(["cost-report", "--head", "fc", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "cost_report.csv").exists()


def test_gen_writes_a_dataset(tmp_path):
    out = tmp_path / "tiny.csi"
    assert main(["gen", *SMALL, "--preset", "fast", "--out", str(out)]) == 0
    dataset = load_dataset(out)
    assert dataset.samples.shape == (6, 2, 8, 8)
    assert dataset.config.gamma_true == 0.9


def test_unknown_compression_ratio_is_a_configuration_error(tmp_path):
    code = main(["train-pipeline", *SMALL, "--cr2", "1/3", "--out", str(tmp_path / "run")])
    assert code == 2


def test_missing_pipeline_is_an_io_error(tmp_path):
    code = main(["eval", *SMALL, "--pipeline", str(tmp_path / "missing"), "--out", str(tmp_path)])
    assert code == 4


def test_missing_dataset_is_an_io_error(tmp_path):
    code = main(["entropy-sweep", "--dataset", str(tmp_path / "nope.csi"), "--out", str(tmp_path)])
    assert code == 4


def test_train_and_evaluate(tmp_path):
    run = tmp_path / "run"
    epochs = ["--epochs-slot1", "1", "--epochs-scratch", "1", "--epochs-warm", "1", "--batch", "3"]
    assert main(["train-pipeline", *SMALL, *epochs, "--out", str(run)]) == 0
    assert (run / "pipeline.json").exists()
    assert main(["eval", *SMALL, "--pipeline", str(run), "--bits", "6", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "eval_run_mu_law6.csv").exists()


def test_bad_choice_exits_through_argparse():
    with pytest.raises(SystemExit):
        main(["gen", "--preset", "walking"])
