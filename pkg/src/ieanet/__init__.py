"""ieanet: inner-ensemble-average convolutional networks on numpy.

A small, fully deterministic deep-learning framework built around one idea:
replacing a convolution layer by the element-wise mean of m parallel
convolutions with independently initialized weights. Includes the layers,
an SGD training loop with a step LR schedule, MNIST-format data parsing,
checkpointing, and analysis tools (outer ensembles, feature-diversity
scores, feature-map export).
"""

from .analysis import (
    EnsemblePrediction, FeatureBank, ensemble_average, export_feature_maps,
    extract_features, lambda_score, mss_score,
)
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .data import (
    BatchIterator, Dataset, parse_amat, parse_idx, standardize,
    standardize_pair, synth_blobs, write_amat, write_idx,
)
from .errors import (
    CheckpointError, ConfigError, DataFormatError, IeaError, ShapeError,
    TrainingDivergedError, UsageError,
)
from .layers import (
    BatchNorm2d, Conv2d, GlobalAvgPool, IeaConv2d, Linear, MaxPool2d,
    Parameter, ReLU, softmax_cross_entropy,
)
from .model import (
    Model, ModelConfig, build_model, conv_param_count, param_count,
)
from .optim import SgdConfig, lr_at_epoch, sgd_step
from .rng import SeededRng
from .tensorops import (
    as_tensor, col2im, col2im_batch, conv_output_size, fill_random, im2col,
    im2col_batch, matmul,
)
from .training import (
    RunMetrics, evaluate, predict_logits, predict_probs, train,
)

__version__ = "0.1.0"
