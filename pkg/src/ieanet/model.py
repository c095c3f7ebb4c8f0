"""N-layer CNN assembly from a declarative config.

A model of depth d stacks d blocks of [conv-or-inner-ensemble -> batchnorm
-> relu -> maxpool], then a global average pool feeding a linear classifier.
All parameters are drawn deterministically from the config seed.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

from .errors import ConfigError, ShapeError
from .layers import (
    BatchNorm2d, Conv2d, GlobalAvgPool, IeaConv2d, Linear, MaxPool2d, ReLU,
)
from .rng import SeededRng
from . import tensorops as T

DEFAULT_CHANNELS = (32, 64, 128)


def _default_channels(depth: int) -> tuple[int, ...]:
    return tuple(32 * 2 ** i for i in range(depth))


@dataclasses.dataclass
class ModelConfig:
    """Declarative description of an N-layer CNN.

    ``m`` is the inner-ensemble size per block: 1 means a plain conv
    baseline, >= 2 an inner ensemble average. An int applies to every block;
    a sequence gives one value per block.
    """

    depth: int = 1
    channels: tuple[int, ...] | None = None
    m: int | tuple[int, ...] = 1
    kernel: int = 3
    stride: int = 1
    padding: int = 1
    input_shape: tuple[int, int, int] = (1, 28, 28)
    num_classes: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.channels is None:
            self.channels = _default_channels(self.depth)
        self.channels = tuple(int(c) for c in self.channels)
        if len(self.channels) != self.depth:
            raise ConfigError(
                f"channels {self.channels} does not match depth {self.depth}"
            )
        if any(c < 1 for c in self.channels):
            raise ConfigError(f"channel counts must be positive: {self.channels}")
        if isinstance(self.m, (int, np.integer)):
            self.m = (int(self.m),) * self.depth
        else:
            self.m = tuple(int(v) for v in self.m)
        if len(self.m) != self.depth:
            raise ConfigError(f"m {self.m} does not match depth {self.depth}")
        if any(v < 1 for v in self.m):
            raise ConfigError(f"m must be >= 1 for every layer, got {self.m}")
        self.input_shape = tuple(int(v) for v in self.input_shape)
        if len(self.input_shape) != 3:
            raise ConfigError(f"input_shape must be (C,H,W), got {self.input_shape}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        raw = json.loads(text)
        return cls(**raw)


class Model:
    """An ordered stack of blocks plus the classification head."""

    def __init__(self, config: ModelConfig, blocks, head_pool, head_linear):
        self.config = config
        self.blocks = blocks          # list of (conv, bn, relu, pool) tuples
        self.head_pool = head_pool
        self.head_linear = head_linear
        self.training = True

    # -- mode ---------------------------------------------------------------
    def train(self):
        self.training = True
        for _, bn, _, _ in self.blocks:
            bn.training = True
        return self

    def eval(self):
        self.training = False
        for _, bn, _, _ in self.blocks:
            bn.training = False
        return self

    # -- passes ---------------------------------------------------------------
    def forward(self, x: np.ndarray) -> np.ndarray:
        for conv, bn, relu, pool in self.blocks:
            x = pool.forward(relu.forward(bn.forward(conv.forward(x))))
        return self.head_linear.forward(self.head_pool.forward(x))

    def backward(self, grad_logits: np.ndarray):
        g = self.head_pool.backward(self.head_linear.backward(grad_logits))
        for i in range(len(self.blocks) - 1, -1, -1):
            conv, bn, relu, pool = self.blocks[i]
            g = bn.backward(relu.backward(pool.backward(g)))
            # the input image needs no gradient, so the first conv skips it
            g = conv.backward(g, need_input_grad=(i > 0))
        return g

    def forward_features(self, x: np.ndarray, layer_index: int) -> np.ndarray:
        """Post-activation output of block ``layer_index`` (before pooling)."""
        if not 0 <= layer_index < len(self.blocks):
            raise ConfigError(
                f"layer index {layer_index} out of range for depth "
                f"{len(self.blocks)} model"
            )
        for i, (conv, bn, relu, pool) in enumerate(self.blocks):
            act = relu.forward(bn.forward(conv.forward(x)))
            if i == layer_index:
                return act
            x = pool.forward(act)
        raise AssertionError("unreachable")

    # -- parameter access -----------------------------------------------------
    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_parameters(self):
        out = []
        for i, (conv, bn, _, _) in enumerate(self.blocks):
            if isinstance(conv, IeaConv2d):
                for j, mem in enumerate(conv.members):
                    for p in mem.parameters():
                        out.append((f"block{i}.conv.m{j}.{p.name}", p))
            else:
                for p in conv.parameters():
                    out.append((f"block{i}.conv.{p.name}", p))
            for p in bn.parameters():
                out.append((f"block{i}.bn.{p.name}", p))
        for p in self.head_linear.parameters():
            out.append((f"head.{p.name}", p))
        return out

    def state_arrays(self):
        """All arrays a checkpoint round-trips: parameters then BN buffers."""
        out = [(name, p.data) for name, p in self.named_parameters()]
        for i, (_, bn, _, _) in enumerate(self.blocks):
            for name, buf in bn.buffers():
                out.append((f"block{i}.bn.{name}", buf))
        return out


def build_model(config: ModelConfig) -> Model:
    """Construct a model with deterministic initialization from config.seed."""
    rng = SeededRng(config.seed)
    c, h, w = config.input_shape
    blocks = []
    in_ch = c
    for i in range(config.depth):
        out_ch = config.channels[i]
        h_conv = T.conv_output_size(h, config.kernel, config.stride, config.padding)
        w_conv = T.conv_output_size(w, config.kernel, config.stride, config.padding)
        if h_conv < 2 or w_conv < 2:
            raise ConfigError(
                f"spatial dims exhausted at block {i}: {h_conv}x{w_conv} "
                f"cannot be pooled"
            )
        conv = IeaConv2d(in_ch, out_ch, config.kernel, config.stride,
                         config.padding, m=config.m[i], rng=rng)
        if config.m[i] == 1:
            conv = conv.members[0]  # plain baseline block
        blocks.append((conv, BatchNorm2d(out_ch), ReLU(), MaxPool2d(2, 2)))
        h = (h_conv - 2) // 2 + 1
        w = (w_conv - 2) // 2 + 1
        in_ch = out_ch
    head = Linear(in_ch, config.num_classes, rng=rng)
    return Model(config, blocks, GlobalAvgPool(), head)


def param_count(model: Model) -> int:
    """Exact number of trainable scalars (running stats excluded)."""
    return int(sum(p.data.size for p in model.parameters()))


def conv_param_count(model: Model) -> int:
    """Trainable scalars inside conv/inner-ensemble layers only."""
    total = 0
    for conv, _, _, _ in model.blocks:
        total += sum(p.data.size for p in conv.parameters())
    return int(total)


def check_compatible(model: Model, config: ModelConfig):
    """Raise ShapeError unless the model was built from an equivalent config."""
    if model.config.to_json() != config.to_json():
        raise ShapeError(
            f"model config {model.config.to_json()} incompatible with "
            f"{config.to_json()}"
        )
