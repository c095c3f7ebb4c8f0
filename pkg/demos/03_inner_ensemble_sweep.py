"""Sweep the inner ensemble size m and watch error, parameter count, and
wall time move. Inner ensembles grow conv parameters m-fold but keep one
architecture and one training run.

Run: python demos/03_inner_ensemble_sweep.py
"""

import time

import numpy as np

from ieanet.data import synth_blobs
from ieanet.model import ModelConfig, build_model, conv_param_count, param_count
from ieanet.optim import SgdConfig
from ieanet.training import train

train_set = synth_blobs(192, 4, seed=0)
test_set = synth_blobs(96, 4, seed=1)
sgd = SgdConfig(lr0=0.05, momentum=0.9, weight_decay=5e-4,
                lr_drop_every=8, total_epochs=8, batch_size=32)
seeds = (0, 1, 2)

print(f"{'m':>3} {'params':>8} {'mean err %':>11} {'std':>6} {'secs':>6}")
baseline_params = None
for m in (1, 2, 3):
    errors = []
    t0 = time.perf_counter()
    for seed in seeds:
        config = ModelConfig(depth=1, channels=(8,), m=m,
                             input_shape=(1, 28, 28), num_classes=4, seed=seed)
        model = build_model(config)
        metrics = train(model, train_set, test_set, sgd, seed=seed)
        errors.append(metrics.final_test_error())
    wall = time.perf_counter() - t0
    params = param_count(build_model(ModelConfig(
        depth=1, channels=(8,), m=m, input_shape=(1, 28, 28), num_classes=4)))
    if baseline_params is None:
        baseline_params = params
    print(f"{m:>3} {params:>8} {np.mean(errors):>11.2f} "
          f"{np.std(errors, ddof=1):>6.2f} {wall:>6.1f}")

base = build_model(ModelConfig(depth=1, channels=(8,), m=1,
                               input_shape=(1, 28, 28), num_classes=4))
print()
print(f"parameter growth per extra member: {conv_param_count(base)} "
      f"(the conv layer), all other parameters shared")
