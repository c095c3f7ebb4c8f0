"""SGD with momentum, weight decay, and a step learning-rate schedule."""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigError, TrainingDivergedError
from .layers import Parameter


@dataclasses.dataclass
class SgdConfig:
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_drop_factor: float = 10.0
    lr_drop_every: int = 100
    total_epochs: int = 350
    batch_size: int = 128

    def __post_init__(self):
        if min(self.lr0, self.lr_drop_every, self.total_epochs) <= 0:
            raise ConfigError("lr0, lr_drop_every, total_epochs must be positive")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("momentum and weight_decay must be non-negative")
        if self.lr_drop_factor <= 1:
            raise ConfigError(f"lr_drop_factor must be > 1, got {self.lr_drop_factor}")
        if self.batch_size < 2:
            raise ConfigError(
                f"batch_size must be >= 2 for batch-norm training, "
                f"got {self.batch_size}"
            )


def lr_at_epoch(epoch: int, cfg: SgdConfig) -> float:
    """lr0 divided by drop_factor once per completed drop_every epochs."""
    if not 0 <= epoch < cfg.total_epochs:
        raise ConfigError(f"epoch {epoch} outside [0,{cfg.total_epochs})")
    return cfg.lr0 / cfg.lr_drop_factor ** (epoch // cfg.lr_drop_every)


def sgd_step(params: list[Parameter], cfg: SgdConfig, lr: float):
    """One heavy-ball update: v <- mu*v + (g + wd*theta); theta <- theta - lr*v.

    Weight decay is skipped for parameters flagged decay=False (biases,
    batch-norm affine terms).
    """
    for p in params:
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(
                f"non-finite gradient in parameter {p.name!r}"
            )
        if cfg.weight_decay != 0.0 and p.decay:
            g = g + cfg.weight_decay * p.data
        p.velocity *= cfg.momentum
        p.velocity += g
        p.data -= lr * p.velocity
