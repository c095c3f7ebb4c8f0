"""Outer-ensemble averaging, feature-diversity scoring, and feature export.

The dissimilarity score between two feature maps is lambda = (1 - rho)/2
with rho their Pearson correlation: 0 for identical maps, 1 for perfectly
anti-correlated ones. A layer's diversity is the mean over features of the
summed pairwise dissimilarities (so the range is [0, n-1] for n features).
"""

from __future__ import annotations

import dataclasses
import math
import os

import numpy as np

from .errors import ConfigError, ShapeError
from .model import Model
from . import tensorops as T


@dataclasses.dataclass
class EnsemblePrediction:
    member_probs: list[np.ndarray]
    averaged: np.ndarray
    labels: np.ndarray


def ensemble_average(prob_sets: list[np.ndarray]) -> EnsemblePrediction:
    """Element-wise mean of member probability tensors, then row argmax.

    Argmax ties break to the lowest class index. Rows must already be
    probability vectors (sum 1 within 1e-6).
    """
    if len(prob_sets) < 1:
        raise ConfigError("ensemble needs at least one member")
    members = [T.as_tensor(p) for p in prob_sets]
    shape = members[0].shape
    for i, p in enumerate(members):
        if p.ndim != 2 or p.shape != shape:
            raise ShapeError(
                f"ensemble member {i} has shape {p.shape}, expected {shape}"
            )
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-6:
            raise ConfigError(f"ensemble member {i} rows are not normalized")
    acc = members[0].copy()
    for p in members[1:]:
        acc += p
    acc /= len(members)
    return EnsemblePrediction(members, acc, acc.argmax(axis=1))


def lambda_score(f: np.ndarray, g: np.ndarray) -> float:
    """Pairwise dissimilarity in [0,1]: 0 = identical, 1 = anti-correlated.

    Constant maps have no correlation; they score 0 against an equal
    constant, 1 against a different one, and 0.5 against a varying map.
    """
    f = T.as_tensor(f)
    g = T.as_tensor(g)
    if f.shape != g.shape:
        raise ShapeError(f"lambda_score shapes differ: {f.shape} vs {g.shape}")
    if np.array_equal(f, g):
        return 0.0
    f_const = np.ptp(f) == 0.0
    g_const = np.ptp(g) == 0.0
    if f_const and g_const:
        return 1.0  # different constants (equal case returned above)
    if f_const or g_const:
        return 0.5
    df = f.ravel() - f.mean()
    dg = g.ravel() - g.mean()
    rho = float(df @ dg) / math.sqrt(float(df @ df) * float(dg @ dg))
    return float(np.clip((1.0 - rho) / 2.0, 0.0, 1.0))


def mss_score(features: np.ndarray) -> float:
    """Mean over features of the summed pairwise dissimilarities.

    score = (1/n) * sum_i sum_{j != i} lambda(f_i, f_j) for the n maps in
    ``features`` (n, H, W). Both orderings of each pair are counted, so the
    score lies in [0, n-1].
    """
    features = T.as_tensor(features)
    if features.ndim != 3 or features.shape[0] < 2:
        raise ConfigError(
            f"mss score needs (n>=2, H, W) features, got {features.shape}"
        )
    n = features.shape[0]
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                total += lambda_score(features[i], features[j])
    return total / n


@dataclasses.dataclass
class FeatureBank:
    """Output channels of one layer for one probe: (n, Ho, Wo)."""

    layer_index: int
    features: np.ndarray
    mode: str = "sample"  # "sample" (one input) or "mean" (batch average)

    def __post_init__(self):
        self.features = T.as_tensor(self.features)
        if self.features.ndim != 3:
            raise ConfigError(
                f"feature bank must be (n,Ho,Wo), got {self.features.shape}"
            )

    @property
    def n(self) -> int:
        return self.features.shape[0]


def extract_features(model: Model, layer_index: int, batch: np.ndarray,
                     mode: str = "sample", sample_index: int = 0) -> FeatureBank:
    """Capture the post-activation channels of one block in eval mode.

    mode "sample" keeps the maps of ``batch[sample_index]``; mode "mean"
    averages the maps over the batch.
    """
    batch = T.as_tensor(batch)
    if batch.ndim != 4:
        raise ShapeError(f"probe batch must be (N,C,H,W), got {batch.shape}")
    was_training = model.training
    model.eval()
    acts = model.forward_features(batch, layer_index)
    if was_training:
        model.train()
    if mode == "mean":
        features = acts.mean(axis=0)
    elif mode == "sample":
        if not 0 <= sample_index < batch.shape[0]:
            raise ConfigError(
                f"probe index {sample_index} out of range for batch of "
                f"{batch.shape[0]}"
            )
        features = acts[sample_index]
    else:
        raise ConfigError(f"unknown feature bank mode {mode!r}")
    return FeatureBank(layer_index, features, mode)


def _to_pgm_bytes(feature: np.ndarray) -> bytes:
    h, w = feature.shape
    lo = feature.min()
    hi = feature.max()
    if hi == lo:
        pixels = np.full((h, w), 128, dtype=np.uint8)
    else:
        scaled = (feature - lo) * (255.0 / (hi - lo))
        pixels = np.rint(scaled).clip(0, 255).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def export_feature_maps(bank: FeatureBank, out_dir) -> list[str]:
    """Write one 8-bit grayscale PGM per channel; returns the file paths.

    Each map is scaled min->0, max->255; constant maps become mid-gray 128.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for ch in range(bank.n):
        path = os.path.join(out_dir, f"layer{bank.layer_index}_ch{ch}.pgm")
        with open(path, "wb") as f:
            f.write(_to_pgm_bytes(bank.features[ch]))
        paths.append(path)
    return paths
