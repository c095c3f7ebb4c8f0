"""Training and evaluation loops with per-epoch metrics."""

from __future__ import annotations

import dataclasses
import time

import numpy as np

from .data import BatchIterator, Dataset
from .errors import ConfigError, TrainingDivergedError
from .layers import softmax_cross_entropy
from .model import Model
from .optim import SgdConfig, lr_at_epoch, sgd_step

METRICS_HEADER = "epoch,lr,train_loss,train_error_pct,test_error_pct,wall_seconds"


@dataclasses.dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_error_pct: float
    test_error_pct: float
    wall_seconds: float


class RunMetrics:
    """Per-epoch records, serializable to CSV with a fixed header."""

    def __init__(self, records: list[EpochRecord] | None = None):
        self.records = records or []

    def append(self, rec: EpochRecord):
        self.records.append(rec)

    def final_test_error(self) -> float:
        return self.records[-1].test_error_pct

    def to_csv(self) -> str:
        lines = [METRICS_HEADER]
        for r in self.records:
            lines.append(
                f"{r.epoch},{float(r.lr)!r},{float(r.train_loss)!r},"
                f"{float(r.train_error_pct)!r},{float(r.test_error_pct)!r},"
                f"{r.wall_seconds:.3f}"
            )
        return "\n".join(lines) + "\n"

    def save_csv(self, path):
        with open(path, "w") as f:
            f.write(self.to_csv())

    @classmethod
    def from_csv(cls, path) -> "RunMetrics":
        with open(path) as f:
            lines = [ln for ln in f.read().splitlines() if ln]
        if not lines or lines[0] != METRICS_HEADER:
            raise ConfigError(f"{path}: unexpected metrics header")
        records = []
        for ln in lines[1:]:
            e, lr, tl, te, ve, ws = ln.split(",")
            records.append(EpochRecord(int(e), float(lr), float(tl),
                                       float(te), float(ve), float(ws)))
        return cls(records)


def predict_logits(model: Model, dataset: Dataset, batch_size: int = 256) -> np.ndarray:
    """Forward the whole dataset in eval mode; restores the previous mode."""
    was_training = model.training
    model.eval()
    chunks = []
    for s in range(0, len(dataset), batch_size):
        chunks.append(model.forward(dataset.images[s:s + batch_size]))
    if was_training:
        model.train()
    return np.concatenate(chunks, axis=0)


def predict_probs(model: Model, dataset: Dataset, batch_size: int = 256) -> np.ndarray:
    logits = predict_logits(model, dataset, batch_size)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def error_pct(logits: np.ndarray, labels: np.ndarray) -> float:
    pred = logits.argmax(axis=1)
    return float(100.0 * np.mean(pred != labels))


def evaluate(model: Model, dataset: Dataset, batch_size: int = 256) -> float:
    """Top-1 error rate in percent, eval mode."""
    return error_pct(predict_logits(model, dataset, batch_size), dataset.labels)


def train(model: Model, train_set: Dataset, test_set: Dataset,
          cfg: SgdConfig, seed: int, epochs: int | None = None,
          log=None) -> RunMetrics:
    """Run SGD for ``epochs`` (default cfg.total_epochs) and collect metrics.

    The model is updated in place. Shuffling is keyed by (seed, epoch), so
    identical seeds replay the exact same run.
    """
    if len(train_set) == 0:
        raise ConfigError("training set is empty")
    epochs = cfg.total_epochs if epochs is None else epochs
    if not 0 < epochs <= cfg.total_epochs:
        raise ConfigError(
            f"epochs={epochs} must lie in 1..total_epochs={cfg.total_epochs}"
        )
    batches = BatchIterator(len(train_set), cfg.batch_size, seed)
    params = model.parameters()
    metrics = RunMetrics()
    model.train()
    for epoch in range(epochs):
        t0 = time.perf_counter()
        lr = lr_at_epoch(epoch, cfg)
        loss_sum = 0.0
        wrong = 0
        for idx in batches.epoch_batches(epoch):
            x = train_set.images[idx]
            y = train_set.labels[idx]
            logits = model.forward(x)
            loss, grad = softmax_cross_entropy(logits, y)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}"
                )
            loss_sum += loss * len(idx)
            wrong += int(np.sum(logits.argmax(axis=1) != y))
            model.backward(grad)
            sgd_step(params, cfg, lr)
        train_loss = loss_sum / len(train_set)
        train_err = 100.0 * wrong / len(train_set)
        test_err = evaluate(model, test_set, max(cfg.batch_size, 256))
        model.train()
        rec = EpochRecord(epoch, lr, train_loss, train_err, test_err,
                          time.perf_counter() - t0)
        metrics.append(rec)
        if log:
            log(f"epoch {epoch:3d}  lr {lr:g}  loss {train_loss:.4f}  "
                f"train_err {train_err:5.2f}%  test_err {test_err:5.2f}%")
    return metrics
