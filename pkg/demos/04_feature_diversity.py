"""Score how different a layer's learned feature maps are from each other,
and export them as grayscale images.

The pairwise score is (1 - Pearson correlation) / 2: 0 for identical maps,
1 for perfectly anti-correlated ones. A layer's diversity is the mean over
maps of its summed pairwise scores, so n maps can score at most n - 1.

Run: python demos/04_feature_diversity.py
"""

import tempfile
from pathlib import Path

import numpy as np

from ieanet.analysis import export_feature_maps, extract_features, lambda_score, mss_score
from ieanet.data import synth_blobs
from ieanet.model import ModelConfig, build_model
from ieanet.optim import SgdConfig
from ieanet.training import train

print("== pairwise score on hand-built maps ==")
ramp = np.arange(25, dtype=np.float64).reshape(5, 5)
print(f"identical maps:        {lambda_score(ramp, ramp):.3f}")
print(f"anti-correlated maps:  {lambda_score(ramp, -ramp):.3f}")
print(f"independent noise:     "
      f"{lambda_score(*np.random.default_rng(0).normal(size=(2, 5, 5))):.3f}")

print()
print("== diversity of trained first-layer features ==")
train_set = synth_blobs(192, 4, seed=0)
test_set = synth_blobs(96, 4, seed=1)
sgd = SgdConfig(lr0=0.05, lr_drop_every=8, total_epochs=8, batch_size=32)

for m in (1, 3):
    scores = []
    for seed in (0, 1, 2):
        model = build_model(ModelConfig(depth=1, channels=(8,), m=m,
                                        input_shape=(1, 28, 28),
                                        num_classes=4, seed=seed))
        train(model, train_set, test_set, sgd, seed=seed)
        bank = extract_features(model, 0, test_set.images[:1])
        scores.append(mss_score(bank.features))
    print(f"m={m}: first-layer diversity {np.mean(scores):.3f} "
          f"(mean over 3 seeds, 8 maps, max possible 7)")

out_dir = Path(tempfile.mkdtemp(prefix="iea_maps_"))
paths = export_feature_maps(bank, out_dir)
print()
print(f"wrote {len(paths)} grayscale maps, e.g. {paths[0]}")
