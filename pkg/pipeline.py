import subprocess, sys

# Default desk experiment: data, slot-1 sanity run, full pipeline, evaluation and reports
steps = [
    "python main.py gen --preset slow --split train --out data/slow_train.csi",
    "python main.py gen --preset slow --split test --out data/slow_test.csi",
    "python main.py oracle-check",
    "python main.py cost-report",
    "python main.py entropy-sweep --dataset data/slow_train.csi --bits 14",
    "python main.py train-pipeline --dataset data/slow_train.csi --cr1 1/4 --cr2 1/16 "
    "--epochs-slot1 300 --epochs-scratch 300 --epochs-warm 100 --out runs/slow_fc_16",
    "python main.py eval --pipeline runs/slow_fc_16 --dataset data/slow_test.csi",
    "python main.py quant-sweep --pipeline runs/slow_fc_16 --dataset data/slow_test.csi",
]

for cmd in steps:
    print(f"\n▶ {cmd}")
    code = subprocess.call(cmd, shell=True)
    if code != 0:
        sys.exit(code)
print("\n🎉 Pipeline finished")
