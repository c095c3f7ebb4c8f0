"""Train a small model on synthetic blobs, checkpoint it, and replay the
run to show that identical seeds give identical bytes.

Run: python demos/02_train_and_checkpoint.py
"""

import tempfile
from pathlib import Path

import numpy as np

from ieanet.checkpoint import load_checkpoint, save_checkpoint
from ieanet.data import synth_blobs
from ieanet.model import ModelConfig, build_model
from ieanet.optim import SgdConfig
from ieanet.training import evaluate, train

train_set = synth_blobs(128, 4, seed=0)
test_set = synth_blobs(64, 4, seed=1)

config = ModelConfig(depth=1, channels=(8,), m=2, input_shape=(1, 28, 28),
                     num_classes=4, seed=0)
sgd = SgdConfig(lr0=0.05, momentum=0.9, weight_decay=5e-4,
                lr_drop_every=10, total_epochs=10, batch_size=32)

model = build_model(config)
metrics = train(model, train_set, test_set, sgd, seed=0,
                log=lambda line: print("  " + line))
print(f"final test error: {metrics.final_test_error():.2f}%")

workdir = Path(tempfile.mkdtemp(prefix="iea_demo_"))
ckpt = workdir / "model.ieac"
save_checkpoint(model, ckpt)
restored = load_checkpoint(ckpt)
# load_checkpoint returns an inference-ready model; match modes before probing
model.eval()
probe = test_set.images[:8]
print(f"restored checkpoint forward bit-identical: "
      f"{np.array_equal(model.forward(probe), restored.forward(probe))}")
print(f"restored test error matches: "
      f"{evaluate(restored, test_set) == evaluate(model, test_set)}")

# same seed, same data, same config: the replay produces the same bytes
replay = build_model(config)
train(replay, train_set, test_set, sgd, seed=0)
ckpt2 = workdir / "replay.ieac"
save_checkpoint(replay, ckpt2)
print(f"rerun checkpoint byte-identical: "
      f"{ckpt.read_bytes() == ckpt2.read_bytes()}")
