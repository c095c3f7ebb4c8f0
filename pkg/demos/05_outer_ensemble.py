"""Average the predictions of independently trained models (an outer
ensemble) and compare against the members. Inner ensembles average inside
the architecture; outer ensembles average finished classifiers.

Run: python demos/05_outer_ensemble.py
"""

import numpy as np

from ieanet.analysis import ensemble_average
from ieanet.data import synth_blobs
from ieanet.model import ModelConfig, build_model
from ieanet.optim import SgdConfig
from ieanet.training import predict_probs, train

train_set = synth_blobs(192, 4, seed=0)
test_set = synth_blobs(96, 4, seed=1)
sgd = SgdConfig(lr0=0.05, momentum=0.9, weight_decay=5e-4,
                lr_drop_every=8, total_epochs=12, batch_size=32)

prob_sets = []
for seed in (0, 1, 2):
    model = build_model(ModelConfig(depth=1, channels=(8,), m=1,
                                    input_shape=(1, 28, 28), num_classes=4,
                                    seed=seed))
    metrics = train(model, train_set, test_set, sgd, seed=seed)
    prob_sets.append(predict_probs(model, test_set))
    print(f"member seed={seed}: test error {metrics.final_test_error():.2f}%")

pred = ensemble_average(prob_sets)
ens_err = 100.0 * np.mean(pred.labels != test_set.labels)
member_errs = [100.0 * np.mean(p.argmax(axis=1) != test_set.labels)
               for p in prob_sets]
print(f"ensemble of 3:  test error {ens_err:.2f}% "
      f"(member mean {np.mean(member_errs):.2f}%)")

# the averaged rows are still probability vectors
print(f"averaged rows sum to one: "
      f"{np.allclose(pred.averaged.sum(axis=1), 1.0, rtol=0, atol=1e-12)}")
