"""Dense float64 array primitives: matmul, im2col/col2im, seeded initialization.

Tensors are plain C-order float64 numpy arrays. Operations here are pure:
inputs are never modified and equal inputs give bit-equal outputs. Reductions
run in a fixed order so results do not depend on thread count.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, ShapeError
from .rng import SeededRng

INIT_SCHEMES = ("uniform-kaiming", "zeros", "ones")


def as_tensor(x) -> np.ndarray:
    """Coerce to a C-order float64 array without copying when already one."""
    return np.ascontiguousarray(x, dtype=np.float64)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with a fixed k-ascending accumulation order.

    c[i,j] = sum_k a[i,k] * b[k,j], accumulated for k = 0, 1, ..., K-1.
    Each k step is a vectorized rank-1 update, so the per-element rounding
    matches a naive triple loop bit for bit.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += a[:, k, None] * b[None, k, :]
    return out


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """Output extent of a convolution along one axis; errors if non-integral."""
    span = size + 2 * padding - kernel
    if span < 0 or span % stride != 0:
        raise ConfigError(
            f"convolution geometry invalid: size={size} kernel={kernel} "
            f"stride={stride} padding={padding} gives non-integral output"
        )
    return span // stride + 1


def im2col(x: np.ndarray, kernel: tuple[int, int], stride: int = 1,
           padding: int = 0) -> np.ndarray:
    """Lower a single (C,H,W) image to patch columns.

    Column j holds the receptive field of output position j (row-major over
    the output grid), zero-padded outside the borders. Result shape is
    (C*kh*kw, Ho*Wo).
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"im2col expects (C,H,W), got {x.shape}")
    cols = im2col_batch(x[None], kernel, stride, padding)
    return cols[0]


def col2im(cols: np.ndarray, input_shape: tuple[int, int, int],
           kernel: tuple[int, int], stride: int = 1, padding: int = 0) -> np.ndarray:
    """Adjoint of im2col: scatter-add patch columns back onto a (C,H,W) grid.

    For any x, y: dot(im2col(x), y) == dot(x, col2im(y)).
    """
    cols = as_tensor(cols)
    c, h, w = input_shape
    kh, kw = kernel
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    if cols.shape != (c * kh * kw, ho * wo):
        raise ShapeError(
            f"col2im got {cols.shape}, expected {(c * kh * kw, ho * wo)} "
            f"for input shape {input_shape}"
        )
    return col2im_batch(cols[None], (1, c, h, w), kernel, stride, padding)[0]


def im2col_batch(x: np.ndarray, kernel: tuple[int, int], stride: int = 1,
                 padding: int = 0) -> np.ndarray:
    """Batched im2col: (N,C,H,W) -> (N, C*kh*kw, Ho*Wo)."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    kh, kw = kernel
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    if padding > 0:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((n, c, kh, kw, ho, wo))
    for u in range(kh):
        for v in range(kw):
            cols[:, :, u, v] = x[:, :, u:u + ho * stride:stride,
                                 v:v + wo * stride:stride]
    return cols.reshape(n, c * kh * kw, ho * wo)


def col2im_batch(cols: np.ndarray, input_shape: tuple[int, int, int, int],
                 kernel: tuple[int, int], stride: int = 1,
                 padding: int = 0) -> np.ndarray:
    """Batched col2im: (N, C*kh*kw, Ho*Wo) -> (N,C,H,W), overlaps summed."""
    cols = as_tensor(cols)
    n, c, h, w = input_shape
    kh, kw = kernel
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    img = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    for u in range(kh):
        for v in range(kw):
            # A strided slice for one (u,v) offset never self-overlaps.
            img[:, :, u:u + ho * stride:stride, v:v + wo * stride:stride] += \
                cols[:, :, u, v]
    if padding > 0:
        img = img[:, :, padding:padding + h, padding:padding + w]
    return np.ascontiguousarray(img)


def im2col_gemm(x: np.ndarray, kernel: tuple[int, int], stride: int = 1,
                padding: int = 0) -> np.ndarray:
    """im2col straight into GEMM layout: (N,C,H,W) -> (C*kh*kw, N*Ho*Wo).

    Same element values as transposing im2col_batch, built without the
    intermediate full-size copy.
    """
    x = as_tensor(x)
    n, c, h, w = x.shape
    kh, kw = kernel
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    if padding > 0:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    xt = x.transpose(1, 0, 2, 3)
    cols = np.empty((c, kh, kw, n, ho, wo))
    for u in range(kh):
        for v in range(kw):
            cols[:, u, v] = xt[:, :, u:u + ho * stride:stride,
                               v:v + wo * stride:stride]
    return cols.reshape(c * kh * kw, n * ho * wo)


def col2im_gemm(cols2: np.ndarray, input_shape: tuple[int, int, int, int],
                kernel: tuple[int, int], stride: int = 1,
                padding: int = 0) -> np.ndarray:
    """Adjoint of im2col_gemm: (C*kh*kw, N*Ho*Wo) -> (N,C,H,W)."""
    cols2 = as_tensor(cols2)
    n, c, h, w = input_shape
    kh, kw = kernel
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    cols = cols2.reshape(c, kh, kw, n, ho, wo)
    img = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    imgt = img.transpose(1, 0, 2, 3)
    for u in range(kh):
        for v in range(kw):
            imgt[:, :, u:u + ho * stride:stride, v:v + wo * stride:stride] += \
                cols[:, u, v]
    if padding > 0:
        return np.ascontiguousarray(img[:, :, padding:padding + h,
                                        padding:padding + w])
    return img


def fill_random(shape, scheme: str, rng: SeededRng | None = None,
                fan_in: int | None = None) -> np.ndarray:
    """Create a tensor under one of the supported initialization schemes.

    ``uniform-kaiming`` draws uniform in +-sqrt(6/fan_in); fan_in defaults to
    prod(shape[1:]), the receptive-field size for conv weight layouts.
    """
    shape = tuple(int(s) for s in (shape if np.iterable(shape) else (shape,)))
    if any(s <= 0 for s in shape):
        raise ConfigError(f"tensor extents must be positive, got {shape}")
    if scheme == "zeros":
        return np.zeros(shape)
    if scheme == "ones":
        return np.ones(shape)
    if scheme == "uniform-kaiming":
        if rng is None:
            raise ConfigError("uniform-kaiming initialization requires an rng")
        if fan_in is None:
            if len(shape) < 2:
                raise ConfigError(
                    f"cannot infer fan_in from shape {shape}; pass fan_in"
                )
            fan_in = int(np.prod(shape[1:]))
        bound = math.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, shape)
    raise ConfigError(f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}")
