#!/usr/bin/env python3
"""
MarkovNet harness command line.

    python main.py gen --preset slow --out data/slow_train.csi
    python main.py train-pipeline --dataset data/slow_train.csi --cr2 1/16 --out runs/slow
    python main.py eval --pipeline runs/slow --dataset data/slow_test.csi --bits 6 --out reports

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O error.
"""

import argparse
import sys
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from data_acquisition.channel_model import DATASET_SIZES, CsiSequence, generate, preset_config
from data_acquisition.dataset_store import load_dataset, save_dataset
from feedback.markovnet import TrainingSchedule, evaluate, load_pipeline, save_pipeline, train_pipeline
from feedback.quantizer import PASSTHROUGH_BITS, QuantizerSpec
from experiments.manifest import load_manifest, parse_ratio
from experiments.reports import write_report
from experiments import runner
from utils.errors import MarkovNetError
from utils.logger import setup_logger
from utils.settings import DATA_DIR, DEFAULT_SEED, OUTPUT_DIR

logger = setup_logger(__name__)

EXIT_CONFIG, EXIT_IO = 2, 4


def add_data_flags(parser, samples_default=None):
    parser.add_argument("--dataset", help="CSIDSET1 file; generated from --preset when omitted")
    parser.add_argument("--preset", choices=["slow", "fast"], default="slow")
    parser.add_argument("--slots", type=int, default=10, help="sequence length T")
    parser.add_argument("--samples", type=int, default=samples_default)
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--rd", type=int, default=32)
    parser.add_argument("--nb", type=int, default=32)
    parser.add_argument("--num-paths", type=int, default=32)
    parser.add_argument("--workers", type=int, default=1)


def add_training_flags(parser):
    parser.add_argument("--cr1", default="1/4")
    parser.add_argument("--head", choices=["fc", "cnn"], default="fc")
    parser.add_argument("--epochs-slot1", type=int, default=1000)
    parser.add_argument("--epochs-scratch", type=int, default=1000)
    parser.add_argument("--epochs-warm", type=int, default=150)
    parser.add_argument("--batch", type=int, default=200)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--no-sphere", action="store_true", help="global range normalization (CsiNet Pro)")


def dataset_from_args(args, split: str = "train") -> CsiSequence:
    if args.dataset:
        dataset = load_dataset(args.dataset)
        if args.slots < dataset.num_slots:
            dataset = CsiSequence(dataset.samples[:, :args.slots], dataset.power_scales,
                                  dataset.sample_seeds, dataset.config, dataset.metadata)
        return dataset
    train_count, test_count = DATASET_SIZES["desk"]
    count = args.samples or (train_count if split == "train" else test_count)
    seed = args.seed if split == "train" else args.seed + 1
    config = preset_config(args.preset, slots=args.slots, seed=seed, rd=args.rd, nb=args.nb,
                           num_paths=args.num_paths)
    return generate(config, count, workers=args.workers)


def schedule_from_args(args) -> TrainingSchedule:
    return TrainingSchedule(epochs_slot1=args.epochs_slot1, epochs_scratch=args.epochs_scratch,
                            epochs_warm=args.epochs_warm, batch_size=args.batch, learning_rate=args.lr)


def quantizer_from_args(args):
    if args.bits == PASSTHROUGH_BITS:
        return None
    return QuantizerSpec(bits=args.bits, mu=args.mu, mode=args.mode)


def cmd_gen(args):
    dataset = dataset_from_args(args, args.split)
    path = save_dataset(dataset, args.out or DATA_DIR / f"{args.preset}_{args.split}.csi")
    print(f"✅ {dataset.num_samples} sequences x {dataset.num_slots} slots -> {path}")


def cmd_train_slot1(args):
    args.slots = 1
    dataset = dataset_from_args(args)
    pipeline = train_pipeline(dataset, parse_ratio(args.cr1), parse_ratio(args.cr1), schedule_from_args(args),
                              latent_head=args.head, spherical=not args.no_sphere, seed=args.seed)
    save_pipeline(pipeline, args.out)
    result = evaluate(pipeline, dataset)[0]
    print(f"✅ Slot-1 codec trained, training-set NMSE {result.nmse.db:.2f} dB -> {args.out}")


def cmd_train_pipeline(args):
    dataset = dataset_from_args(args)
    pipeline = train_pipeline(dataset, parse_ratio(args.cr1), parse_ratio(args.cr2), schedule_from_args(args),
                              latent_head=args.head, spherical=not args.no_sphere, seed=args.seed)
    save_pipeline(pipeline, args.out)
    print(f"✅ {pipeline.slots}-slot pipeline (gamma={pipeline.gamma:.4f}) -> {args.out}")


def cmd_eval(args):
    pipeline = load_pipeline(args.pipeline)
    dataset = dataset_from_args(args, "test")
    spec = quantizer_from_args(args)
    rows = runner.evaluation_rows(Path(args.pipeline).name, pipeline, dataset, [spec])
    table = pd.DataFrame(rows)
    label = "fp32" if spec is None else spec.label()
    path = write_report(table, Path(args.out) / f"eval_{Path(args.pipeline).name}_{label}.csv",
                        {"pipeline": args.pipeline, "dataset": args.dataset or args.preset, "seed": args.seed})
    for row in rows:
        print(f"   slot {row['slot']:2d}: {row['nmse_db']:8.2f} dB  {row['feedback_bits']} bits")
    print(f"✅ Evaluation -> {path}")


def cmd_quant_sweep(args):
    pipeline = load_pipeline(args.pipeline)
    dataset = dataset_from_args(args, "test")
    sweep = runner.quant_sweep(pipeline, dataset, mu=args.mu)
    path = write_report(sweep, Path(args.out) / f"quant_sweep_{Path(args.pipeline).name}.csv",
                        {"pipeline": args.pipeline, "mu": args.mu, "seed": args.seed})
    print(runner.sweep_summary(sweep).to_string(index=False))
    print(f"✅ Quantization sweep -> {path}")


def cmd_entropy_sweep(args):
    dataset = dataset_from_args(args)
    deltas = [int(d) for d in args.deltas.split(",")]
    table = runner.run_entropy_sweep(dataset, deltas, args.bits, Path(args.out) / f"entropy_{args.preset}.csv",
                                     {"preset": args.preset, "seed": args.seed, "samples": dataset.num_samples},
                                     workers=args.workers)
    print(table.to_string(index=False))


def cmd_cost_report(args):
    heads = ("fc", "cnn") if args.head == "both" else (args.head,)
    table = runner.cost_report(Path(args.out) / "cost_report.csv", heads)
    print(table.to_string(index=False))


def cmd_oracle_check(args):
    dataset = dataset_from_args(args)
    table = runner.oracle_check(dataset, seed=args.seed, pca_epochs=args.pca_epochs)
    print(table.to_string(index=False))
    if not table["passed"].all():
        print("❌ Oracle check failed")
        return 1
    print("✅ All oracles passed")
    return 0


def cmd_run(args):
    manifest = load_manifest(args.manifest)
    session = runner.open_registry()
    try:
        result = runner.run_experiment(manifest, args.out, session=session,
                                       save_checkpoints=args.save_checkpoints)
    finally:
        session.close()
    print(f"✅ {len(result.report)} rows -> {result.report_path} (run {result.run_id})")


def cmd_runs(args):
    from database.models import ExperimentRun
    session = runner.open_registry()
    try:
        runs = session.query(ExperimentRun).order_by(ExperimentRun.id.desc()).limit(args.limit).all()
        for run in runs:
            print(f"{run.id:4d}  {run.manifest_hash}  {run.name:20s} {run.preset:5s} "
                  f"gamma={run.gamma_hat:.4f}  {len(run.slots)} rows  {run.report_path}")
        if not runs:
            print("No runs recorded yet")
    finally:
        session.close()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="MarkovNet differential CSI feedback harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a CSIDSET1 dataset")
    add_data_flags(p)
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train-slot1", help="train the slot-1 codec alone")
    add_data_flags(p)
    add_training_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_slot1)

    p = sub.add_parser("train-pipeline", help="train a full MarkovNet pipeline")
    add_data_flags(p)
    add_training_flags(p)
    p.add_argument("--cr2", default="1/16")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_pipeline)

    for name, func, help_text in (("eval", cmd_eval, "per-slot NMSE and feedback bits"),
                                  ("quant-sweep", cmd_quant_sweep, "NMSE under 32/6/4-bit quantizers")):
        p = sub.add_parser(name, help=help_text)
        add_data_flags(p)
        p.add_argument("--pipeline", required=True, help="directory written by train-pipeline")
        p.add_argument("--bits", type=int, default=PASSTHROUGH_BITS)
        p.add_argument("--mu", type=float, default=255.0)
        p.add_argument("--mode", choices=["mu_law", "uniform"], default="mu_law")
        p.add_argument("--out", default=str(OUTPUT_DIR))
        p.set_defaults(func=func)

    p = sub.add_parser("entropy-sweep", help="conditional entropy per feedback interval")
    add_data_flags(p)
    p.add_argument("--deltas", default="1,2,3,4,5")
    p.add_argument("--bits", type=int, default=14)
    p.add_argument("--out", default=str(OUTPUT_DIR))
    p.set_defaults(func=cmd_entropy_sweep)

    p = sub.add_parser("cost-report", help="parameter and FLOP table")
    p.add_argument("--head", choices=["fc", "cnn", "both"], default="both")
    p.add_argument("--out", default=str(OUTPUT_DIR))
    p.set_defaults(func=cmd_cost_report)

    p = sub.add_parser("oracle-check", help="gradient, identity-codec and PCA oracles")
    add_data_flags(p, samples_default=64)
    p.add_argument("--pca-epochs", type=int, default=300)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("run", help="run an experiment manifest and record it")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=str(OUTPUT_DIR))
    p.add_argument("--save-checkpoints", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("runs", help="list recorded experiment runs")
    p.add_argument("--limit", type=int, default=20)
    p.set_defaults(func=cmd_runs)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except MarkovNetError as e:
        logger.error(f"{args.command}: {e}")
        return e.exit_code
    except ValidationError as e:
        logger.error(f"{args.command}: invalid configuration: {e}")
        return EXIT_CONFIG
    except OSError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
