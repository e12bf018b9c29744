"""
Experiment orchestration behind the CLI: datasets, pipeline training,
per-slot evaluation, quantization and entropy sweeps, cost tables and the
oracle checks.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from analysis.entropy import entropy_sweep
from analysis.metrics import nmse
from autodiff.gradcheck import run_suite
from data_acquisition.channel_model import CsiSequence, generate
from data_acquisition.dataset_store import load_dataset
from database.database import check_connection, get_session, init_database
from database.models import ExperimentRun, SlotResult
from feedback.codec import CodecConfig, build, train
from feedback.cost import table_rows
from feedback.markovnet import (GammaEstimate, MarkovNetPipeline, estimate_gamma, evaluate,
                                save_pipeline, train_independent, train_pipeline)
from feedback.oracles import IdentityCodec, pca_oracle
from feedback.quantizer import QuantizerSpec
from feedback.sphere import MagnitudeQuantizer
from experiments.manifest import ExperimentManifest
from experiments.reports import write_report
from utils.errors import DatasetIOError
from utils.logger import setup_logger

logger = setup_logger(__name__)

SWEEP_BITS = (32, 6, 4)
SWEEP_MODES = ("mu_law", "uniform")


@dataclass
class ExperimentResult:
    manifest_hash: str
    report: pd.DataFrame
    report_path: Path
    gamma: GammaEstimate
    pipelines: Dict[str, MarkovNetPipeline] = field(default_factory=dict)
    run_id: Optional[int] = None


def ratio_label(ratio: float) -> str:
    return f"1/{int(round(1 / ratio))}"


def load_datasets(manifest: ExperimentManifest) -> Tuple[CsiSequence, CsiSequence]:
    """Load the manifest's dataset files, or generate train and test splits from disjoint seeds"""
    train_count, test_count = manifest.sample_counts
    if manifest.dataset:
        train_set = load_dataset(manifest.dataset)
    else:
        train_set = generate(manifest.channel_config("train"), train_count, workers=manifest.workers)
    if manifest.test_dataset:
        test_set = load_dataset(manifest.test_dataset)
    else:
        test_set = generate(manifest.channel_config("test"), test_count, workers=manifest.workers)
    return train_set, test_set


def _codec_template(manifest: ExperimentManifest, dataset: CsiSequence) -> CodecConfig:
    rd, nb = dataset.samples.shape[2:]
    return CodecConfig(**{**manifest.codec, "rd": rd, "nb": nb})


def train_manifest_pipelines(manifest: ExperimentManifest,
                             train_set: CsiSequence) -> Dict[str, MarkovNetPipeline]:
    """Every pipeline the manifest names, keyed by a self-describing label, in manifest order"""
    template = _codec_template(manifest, train_set)
    common = dict(schedule=manifest.schedule, seed=manifest.seed, codec_template=template,
                  magnitude_quantizer=MagnitudeQuantizer(bits=manifest.magnitude_bits))
    pipelines: Dict[str, MarkovNetPipeline] = {}
    for head in manifest.heads:
        family = "MarkovNet" if head == "fc" else "MarkovNet-CNN"
        for cr2 in manifest.cr2:
            crs = f"{ratio_label(manifest.cr1)}-{ratio_label(cr2)}"
            pipelines[f"{family} {crs}"] = train_pipeline(
                train_set, manifest.cr1, cr2, latent_head=head, spherical=manifest.spherical, **common)
            if "csinet_pro" in manifest.baselines:
                pipelines[f"CsiNet Pro {head} {crs}"] = train_pipeline(
                    train_set, manifest.cr1, cr2, latent_head=head, spherical=False, **common)
            if "independent" in manifest.baselines:
                pipelines[f"SphNet {head} {ratio_label(cr2)}"] = train_independent(
                    train_set, cr2, latent_head=head, spherical=True, **common)
    return pipelines


def evaluation_rows(label: str, pipeline: MarkovNetPipeline, test_set: CsiSequence,
                    quantizers: Iterable[Optional[QuantizerSpec]]) -> List[dict]:
    rows = []
    for spec in quantizers:
        for result in evaluate(pipeline, test_set, spec):
            rows.append({
                "pipeline": label,
                "head": pipeline.metadata.get("latent_head"),
                "cr1": ratio_label(pipeline.metadata.get("cr1", 0.25)),
                "cr2": ratio_label(pipeline.metadata.get("cr2", 0.25)),
                "quantizer": "fp32" if spec is None else spec.label(),
                "slot": result.slot,
                "nmse_linear": result.nmse.linear,
                "nmse_db": result.nmse.db,
                "feedback_bits": result.bits,
            })
    return rows


def record_run(session, manifest: ExperimentManifest, report: pd.DataFrame,
               report_path: Path, gamma_hat: float) -> int:
    run = ExperimentRun(
        manifest_hash=manifest.manifest_hash(),
        name=manifest.name,
        preset=manifest.preset,
        seed=manifest.seed,
        gamma_hat=gamma_hat,
        report_path=str(report_path),
        manifest=manifest.model_dump(mode="json"),
    )
    for row in report.to_dict("records"):
        run.slots.append(SlotResult(
            pipeline=row["pipeline"],
            slot=int(row["slot"]),
            nmse_linear=float(row["nmse_linear"]),
            nmse_db=float(row["nmse_db"]) if np.isfinite(row["nmse_db"]) else None,
            feedback_bits=int(row["feedback_bits"]),
            quantizer=row["quantizer"],
        ))
    session.add(run)
    session.commit()
    return run.id


def run_experiment(manifest: ExperimentManifest, out_dir: Union[str, Path],
                   session=None, save_checkpoints: bool = False) -> ExperimentResult:
    """
    Train every pipeline the manifest names, evaluate each per slot (unquantized
    plus each listed quantizer) and write one CSV. Row order follows the manifest.
    """
    out_dir = Path(out_dir)
    digest = manifest.manifest_hash()
    train_set, test_set = load_datasets(manifest)
    gamma = estimate_gamma(train_set)
    logger.info(f"Experiment {manifest.name} [{digest}]: gamma_hat={gamma.gamma_hat:.4f} "
                f"from {gamma.sample_count} slot pairs")

    pipelines = train_manifest_pipelines(manifest, train_set)
    quantizers: List[Optional[QuantizerSpec]] = [None] + list(manifest.quantizers)
    rows = []
    for label, pipeline in pipelines.items():
        rows += evaluation_rows(label, pipeline, test_set, quantizers)
        if save_checkpoints:
            save_pipeline(pipeline, out_dir / "checkpoints" / label.replace(" ", "_").replace("/", "-"))
    report = pd.DataFrame(rows)
    report["gamma_hat"] = gamma.gamma_hat

    header = {"manifest_hash": digest, "name": manifest.name, "preset": manifest.preset,
              "seed": manifest.seed, "test_seed": manifest.seed + 1,
              "train_samples": train_set.num_samples, "test_samples": test_set.num_samples}
    report_path = write_report(report, out_dir / f"{manifest.name}_{digest}.csv", header)

    run_id = None
    if session is not None:
        run_id = record_run(session, manifest, report, report_path, gamma.gamma_hat)
    return ExperimentResult(digest, report, report_path, gamma, pipelines, run_id)


def quant_sweep(pipeline: MarkovNetPipeline, test_set: CsiSequence,
                bits: Iterable[int] = SWEEP_BITS, modes: Iterable[str] = SWEEP_MODES,
                mu: float = 255.0) -> pd.DataFrame:
    """
    Per-slot NMSE under each codeword quantizer, with the degradation against
    unquantized feedback. Slot 1 stays at 8 bits whenever b < 8.
    """
    reference = {r.slot: r.nmse.db for r in evaluate(pipeline, test_set)}
    rows = []
    for mode in modes:
        for b in bits:
            spec = QuantizerSpec(bits=b, mu=mu, mode=mode)
            for result in evaluate(pipeline, test_set, spec):
                rows.append({
                    "mode": mode,
                    "bits": b,
                    "slot": result.slot,
                    "nmse_db": result.nmse.db,
                    "degradation_db": result.nmse.db - reference[result.slot],
                    "feedback_bits": result.bits,
                    "clipped": result.clipped,
                })
    return pd.DataFrame(rows)


def sweep_summary(sweep: pd.DataFrame) -> pd.DataFrame:
    """Mean degradation per (mode, bits) over slots"""
    return sweep.groupby(["mode", "bits"], sort=False)["degradation_db"].mean().reset_index()


def run_entropy_sweep(dataset: CsiSequence, deltas: Iterable[int], bits: int,
                      out_path: Union[str, Path], header: Dict[str, object], workers: int = 1) -> pd.DataFrame:
    table = entropy_sweep(dataset, deltas, bits, workers=workers)
    write_report(table, out_path, header)
    return table


def cost_report(out_path: Union[str, Path], heads: Iterable[str] = ("fc", "cnn"),
                **overrides) -> pd.DataFrame:
    table = table_rows(heads=heads, **overrides)
    write_report(table, out_path, {"flop_convention": "2 per multiply-accumulate, biases and activations excluded"})
    return table


def pca_check(seed: int = 0, samples: int = 2000, rd: int = 8, nb: int = 8,
              compression_ratio: float = 1 / 8, epochs: int = 300,
              learning_rate: float = 1e-2) -> Dict[str, float]:
    """
    Train the bias-free linear codec on anisotropic Gaussian data and compare
    its reconstruction error to the PCA projection of the same latent size.
    """
    rng = np.random.default_rng(seed)
    config = CodecConfig(rd=rd, nb=nb, compression_ratio=compression_ratio, linear=True)
    dim, latent = config.input_dim, config.latent_dim
    spectrum = np.concatenate([rng.uniform(2.0, 4.0, latent), rng.uniform(0.1, 0.5, dim - latent)])
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    data = (rng.standard_normal((samples, dim)) * np.sqrt(spectrum)) @ basis.T
    oracle = pca_oracle(data, latent)

    model = build(config, seed)
    inputs = data.reshape(samples, 2, rd, nb)
    train(model, inputs, epochs=epochs, learning_rate=learning_rate, seed=seed, label="linear codec")
    error = float(np.mean(np.sum((model.reconstruct(inputs) - inputs) ** 2, axis=(1, 2, 3))))
    return {"pca_error": oracle.reconstruction_error, "codec_error": error,
            "relative_gap": error / oracle.reconstruction_error - 1.0}


def identity_check(dataset: CsiSequence) -> List[float]:
    """End-to-end linear NMSE per slot with lossless codecs and raw magnitudes"""
    rd, nb = dataset.samples.shape[2:]
    pipeline = MarkovNetPipeline(
        slot1_codec=IdentityCodec(rd, nb),
        residual_codecs=[IdentityCodec(rd, nb) for _ in range(dataset.num_slots - 1)],
        gamma=float(np.clip(estimate_gamma(dataset).gamma_hat, 0.0, 1.0)) if dataset.num_slots > 1 else 0.0,
        magnitude_quantizer=None,
    )
    recon = pipeline.reconstruct(dataset.samples)
    return [nmse(dataset.slot(t), recon[:, t - 1]).linear for t in range(1, dataset.num_slots + 1)]


def oracle_check(dataset: CsiSequence, seed: int = 0, gradcheck_seeds: int = 20,
                 pca_epochs: int = 300) -> pd.DataFrame:
    rows = []
    worst = 0.0
    for s in range(gradcheck_seeds):
        worst = max(worst, max(run_suite(seed + s).values()))
    rows.append({"oracle": "finite_difference_gradients", "value": worst, "threshold": 1e-4,
                 "passed": worst <= 1e-4})

    identity = max(identity_check(dataset))
    rows.append({"oracle": "identity_codec_nmse", "value": identity, "threshold": 1e-20,
                 "passed": identity <= 1e-20})

    pca = pca_check(seed, epochs=pca_epochs)
    rows.append({"oracle": "linear_codec_vs_pca", "value": pca["relative_gap"], "threshold": 0.10,
                 "passed": abs(pca["relative_gap"]) <= 0.10})

    table = pd.DataFrame(rows)
    for row in rows:
        log = logger.info if row["passed"] else logger.error
        log(f"{row['oracle']}: {row['value']:.3g} (threshold {row['threshold']:g})")
    return table


def open_registry(bind=None):
    if not check_connection(bind):
        raise DatasetIOError("run registry is unreachable; check DATABASE_URL")
    init_database(bind)
    return get_session(bind)
