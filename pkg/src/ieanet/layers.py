"""Layers with explicit forward/backward passes.

Every layer caches what its backward pass needs during forward and writes
parameter gradients into its Parameter objects on backward. The inner
ensemble average layer (IeaConv2d) computes the element-wise mean of m
parallel convolutions that share hyper-parameters but not weights.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError, UsageError
from .rng import SeededRng
from . import tensorops as T


class Parameter:
    """A trainable tensor with its gradient and momentum slot.

    ``decay=False`` marks parameters exempt from weight decay (biases and
    batch-norm affine terms).
    """

    def __init__(self, name: str, data: np.ndarray, decay: bool = True):
        self.name = name
        self.data = T.as_tensor(data)
        self.grad = np.zeros_like(self.data)
        self.velocity = np.zeros_like(self.data)
        self.decay = decay

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.data.shape}, decay={self.decay})"


class Layer:
    """Base class: stateless layers only need forward/backward."""

    def parameters(self) -> list[Parameter]:
        return []

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        """Non-trainable state that checkpoints must round-trip."""
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _pair(kernel_size) -> tuple[int, int]:
    if np.iterable(kernel_size):
        kh, kw = kernel_size
        return int(kh), int(kw)
    return int(kernel_size), int(kernel_size)


def _lower_input(x, in_channels, kernel, stride, padding):
    """im2col an input batch into one (C*kh*kw, N*Ho*Wo) GEMM operand."""
    x = T.as_tensor(x)
    if x.ndim != 4 or x.shape[1] != in_channels:
        raise ShapeError(f"conv expected (N,{in_channels},H,W), got {x.shape}")
    n, _, h, w = x.shape
    kh, kw = kernel
    ho = T.conv_output_size(h, kh, stride, padding)
    wo = T.conv_output_size(w, kw, stride, padding)
    cols2 = T.im2col_gemm(x, kernel, stride, padding)
    return cols2, x.shape, (ho, wo)


def _lift_output(out2, n, out_channels, ho, wo, bias):
    """(O, N*Ho*Wo) GEMM result back to (N, O, Ho, Wo) plus per-channel bias."""
    out = out2.reshape(out_channels, n, ho * wo).transpose(1, 0, 2)
    out = out.reshape(n, out_channels, ho, wo) + bias.reshape(1, -1, 1, 1)
    return np.ascontiguousarray(out)


def _flatten_grad(grad_out, ho, wo):
    """(N, O, Ho, Wo) upstream gradient to the (O, N*Ho*Wo) GEMM layout."""
    n, o = grad_out.shape[:2]
    return np.ascontiguousarray(
        grad_out.reshape(n, o, ho * wo).transpose(1, 0, 2)
    ).reshape(o, n * ho * wo)


class Conv2d(Layer):
    """2-D cross-correlation with bias, lowered to im2col + GEMM.

    out[n,o,i,j] = bias[o] + sum_{c,u,v} w[o,c,u,v] * x_pad[n,c,i*s+u,j*s+v]
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size,
                 stride: int = 1, padding: int = 0,
                 rng: SeededRng | None = None):
        kh, kw = _pair(kernel_size)
        if in_channels < 1 or out_channels < 1 or kh < 1 or kw < 1:
            raise ConfigError(
                f"conv needs positive channels/kernel, got in={in_channels} "
                f"out={out_channels} kernel=({kh},{kw})"
            )
        if stride < 1 or padding < 0:
            raise ConfigError(f"bad stride={stride} or padding={padding}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = (kh, kw)
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kh * kw
        wshape = (out_channels, in_channels, kh, kw)
        if rng is None:
            wdata = T.fill_random(wshape, "zeros")
        else:
            wdata = T.fill_random(wshape, "uniform-kaiming", rng, fan_in=fan_in)
        self.weight = Parameter("weight", wdata)
        self.bias = Parameter("bias", T.fill_random((out_channels,), "zeros"),
                              decay=False)
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def hyper_key(self):
        return (self.in_channels, self.out_channels, self.kernel,
                self.stride, self.padding)

    def forward(self, x: np.ndarray) -> np.ndarray:
        cols2, x_shape, (ho, wo) = _lower_input(
            x, self.in_channels, self.kernel, self.stride, self.padding
        )
        w2 = self.weight.data.reshape(self.out_channels, cols2.shape[0])
        out2 = w2 @ cols2
        self._cache = (cols2, x_shape, (ho, wo))
        return _lift_output(out2, x_shape[0], self.out_channels, ho, wo,
                            self.bias.data)

    def backward(self, grad_out: np.ndarray,
                 need_input_grad: bool = True) -> np.ndarray | None:
        if self._cache is None:
            raise UsageError("conv backward called before forward")
        cols2, x_shape, (ho, wo) = self._cache
        grad_out = T.as_tensor(grad_out)
        n = x_shape[0]
        if grad_out.shape != (n, self.out_channels, ho, wo):
            raise ShapeError(
                f"conv grad_out {grad_out.shape} != forward output "
                f"{(n, self.out_channels, ho, wo)}"
            )
        ck = cols2.shape[0]
        go2 = _flatten_grad(grad_out, ho, wo)
        self.bias.grad = grad_out.sum(axis=(0, 2, 3))
        self.weight.grad = (go2 @ cols2.T).reshape(self.weight.data.shape)
        if not need_input_grad:
            return None
        w2 = self.weight.data.reshape(self.out_channels, ck)
        return T.col2im_gemm(w2.T @ go2, x_shape, self.kernel,
                             self.stride, self.padding)


class IeaConv2d(Layer):
    """Inner ensemble average of m convolutions with independent weights.

    Forward is the element-wise mean of the member outputs, accumulated in
    member-index order and scaled by 1/m. Backward hands each member the
    upstream gradient divided by m and sums the member input-gradients.
    m=1 reproduces a plain convolution bit for bit.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size,
                 stride: int = 1, padding: int = 0, m: int = 1,
                 rng: SeededRng | None = None):
        if m < 1:
            raise ConfigError(f"inner ensemble size m must be >= 1, got {m}")
        # Independent weight draws: members consume the rng sequentially.
        self.members = [
            Conv2d(in_channels, out_channels, kernel_size, stride, padding, rng)
            for _ in range(m)
        ]
        self._cache = None

    @classmethod
    def from_members(cls, members: list[Conv2d]) -> "IeaConv2d":
        if not members:
            raise ConfigError("inner ensemble needs at least one member")
        key = members[0].hyper_key()
        for mem in members[1:]:
            if mem.hyper_key() != key:
                raise ConfigError(
                    f"heterogeneous ensemble members: {mem.hyper_key()} != {key}"
                )
        obj = cls.__new__(cls)
        obj.members = list(members)
        obj._cache = None
        return obj

    @property
    def m(self) -> int:
        return len(self.members)

    def parameters(self):
        return [p for mem in self.members for p in mem.parameters()]

    def forward(self, x: np.ndarray) -> np.ndarray:
        # all members see the same input, so the im2col lowering is shared
        # and the member GEMMs run as one stacked GEMM; each member's block
        # is bit-identical to what its standalone forward would produce
        first = self.members[0]
        o = first.out_channels
        cols2, x_shape, (ho, wo) = _lower_input(
            x, first.in_channels, first.kernel, first.stride, first.padding
        )
        ck = cols2.shape[0]
        w_stack = np.concatenate(
            [mem.weight.data.reshape(o, ck) for mem in self.members], axis=0
        )
        out2 = w_stack @ cols2
        # mean accumulated in member-index order, then scaled once
        acc = out2[:o].copy()
        for i in range(1, self.m):
            acc += out2[i * o:(i + 1) * o]
        acc *= 1.0 / self.m
        bias_mean = self.members[0].bias.data.copy()
        for mem in self.members[1:]:
            bias_mean += mem.bias.data
        bias_mean *= 1.0 / self.m
        self._cache = (cols2, x_shape, (ho, wo))
        return _lift_output(acc, x_shape[0], o, ho, wo, bias_mean)

    def backward(self, grad_out: np.ndarray,
                 need_input_grad: bool = True) -> np.ndarray | None:
        if self._cache is None:
            raise UsageError("iea backward called before forward")
        cols2, x_shape, (ho, wo) = self._cache
        first = self.members[0]
        o = first.out_channels
        n = x_shape[0]
        grad_out = T.as_tensor(grad_out)
        if grad_out.shape != (n, o, ho, wo):
            raise ShapeError(
                f"iea grad_out {grad_out.shape} != forward output "
                f"{(n, o, ho, wo)}"
            )
        scaled = grad_out / self.m
        go2 = _flatten_grad(scaled, ho, wo)
        # every member receives the same upstream grad_out/m, so the weight
        # and bias gradients are computed once and copied to each member
        grad_w = (go2 @ cols2.T).reshape(first.weight.data.shape)
        grad_b = scaled.sum(axis=(0, 2, 3))
        for mem in self.members:
            mem.weight.grad = grad_w.copy()
            mem.bias.grad = grad_b.copy()
        if not need_input_grad:
            return None
        # sum of member input-gradients == (sum of member weights)^T applied
        # once, by linearity of the GEMM
        ck = cols2.shape[0]
        w_sum = self.members[0].weight.data.reshape(o, ck).copy()
        for mem in self.members[1:]:
            w_sum += mem.weight.data.reshape(o, ck)
        return T.col2im_gemm(w_sum.T @ go2, x_shape, first.kernel,
                             first.stride, first.padding)


class BatchNorm2d(Layer):
    """Per-channel batch normalization with running statistics.

    Train mode normalizes with the (biased) batch statistics and blends them
    into the running stats: running <- (1-momentum)*running + momentum*batch.
    Eval mode normalizes with the running stats.
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        if not 0.0 < momentum < 1.0:
            raise ConfigError(f"momentum must lie in (0,1), got {momentum}")
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter("gamma", T.fill_random((channels,), "ones"),
                               decay=False)
        self.beta = Parameter("beta", T.fill_random((channels,), "zeros"),
                              decay=False)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.training = True
        self._cache = None

    def parameters(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [("running_mean", self.running_mean),
                ("running_var", self.running_var)]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = T.as_tensor(x)
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"batchnorm expected (N,{self.channels},H,W), "
                             f"got {x.shape}")
        n, c, h, w = x.shape
        if self.training:
            count = n * h * w
            if count < 2:
                raise ConfigError(
                    f"batchnorm train mode needs >= 2 values per channel, "
                    f"got batch*spatial = {count}"
                )
            mean = x.mean(axis=(0, 2, 3))
            # biased variance via E[x^2] - mean^2; clamp tiny negatives from
            # cancellation so constant channels stay at exactly var = 0
            sumsq = np.einsum("nchw,nchw->c", x, x)
            var = np.maximum(sumsq / count - mean * mean, 0.0)
            self.running_mean[:] = (1 - self.momentum) * self.running_mean \
                + self.momentum * mean
            self.running_var[:] = (1 - self.momentum) * self.running_var \
                + self.momentum * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        self._cache = (x, mean, inv_std, self.training)
        # single fused affine pass: g*(x-mean)*inv_std + b == x*scale + shift
        scale = (self.gamma.data * inv_std).reshape(1, c, 1, 1)
        shift = (self.beta.data - self.gamma.data * mean * inv_std)
        out = x * scale
        out += shift.reshape(1, c, 1, 1)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise UsageError("batchnorm backward called before forward")
        x, mean, inv_std, was_training = self._cache
        grad_out = T.as_tensor(grad_out)
        c = self.channels
        sum_dy = grad_out.sum(axis=(0, 2, 3))
        # sum(dy * x_hat) without materializing x_hat
        sum_dy_x = np.einsum("nchw,nchw->c", grad_out, x)
        sum_dy_xhat = inv_std * (sum_dy_x - mean * sum_dy)
        self.gamma.grad = sum_dy_xhat
        self.beta.grad = sum_dy
        a = self.gamma.data * inv_std
        if not was_training:
            return grad_out * a.reshape(1, c, 1, 1)
        n, _, h, w = grad_out.shape
        count = n * h * w
        # grad_x = a*(dy - (sum_dy + x_hat*sum_dy_xhat)/count), regrouped so
        # x enters through one fused multiply: grad_x = dy*a - x*p - q
        p = a * inv_std * sum_dy_xhat / count
        q = a * sum_dy / count - p * mean
        grad_x = grad_out * a.reshape(1, c, 1, 1)
        grad_x -= x * p.reshape(1, c, 1, 1)
        grad_x -= q.reshape(1, c, 1, 1)
        return grad_x


class ReLU(Layer):
    """max(0, x); the subgradient at exactly 0 is taken as 0."""

    def __init__(self):
        self._out = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = T.as_tensor(x)
        self._out = np.maximum(x, 0.0)
        return self._out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._out is None:
            raise UsageError("relu backward called before forward")
        return np.where(self._out > 0, T.as_tensor(grad_out), 0.0)


class MaxPool2d(Layer):
    """Window maximum with argmax routing; ties go to the first position in a
    row-major scan of the window. Trailing rows/columns that do not fill a
    window are dropped.
    """

    def __init__(self, window: int = 2, stride: int = 2):
        if window < 1 or stride < 1:
            raise ConfigError(f"bad pool window={window} stride={stride}")
        self.window = window
        self.stride = stride
        self._cache = None

    def _window(self, x, u, v, ho, wo):
        s = self.stride
        return x[:, :, u:u + ho * s:s, v:v + wo * s:s]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = T.as_tensor(x)
        n, c, h, w = x.shape
        k, s = self.window, self.stride
        if k > h or k > w:
            raise ShapeError(f"pool window {k} larger than input {h}x{w}")
        ho = (h - k) // s + 1
        wo = (w - k) // s + 1
        out = self._window(x, 0, 0, ho, wo).copy()
        for idx in range(1, k * k):
            u, v = divmod(idx, k)
            np.maximum(out, self._window(x, u, v, ho, wo), out)
        self._cache = (x, out, (ho, wo))
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise UsageError("maxpool backward called before forward")
        x, out, (ho, wo) = self._cache
        grad_out = T.as_tensor(grad_out)
        k, s = self.window, self.stride
        n, c, h, w = x.shape
        # forward scan with a claim mask: of the positions that equal the
        # window max, only the first in row-major order takes the gradient
        unclaimed = np.ones(grad_out.shape, dtype=bool)
        buf = np.empty(grad_out.shape)
        if s == k and h % k == 0 and w % k == 0:
            # aligned windows: one contiguous compare finds every hit
            hit = x.reshape(n, c, ho, k, wo, k) == out[:, :, :, None, :, None]
            grad_x = np.zeros((n, c, ho, k, wo, k))
            for idx in range(k * k):
                u, v = divmod(idx, k)
                mask = hit[:, :, :, u, :, v] & unclaimed
                np.multiply(grad_out, mask, out=buf)
                grad_x[:, :, :, u, :, v] += buf
                if idx < k * k - 1:
                    unclaimed ^= mask
            return grad_x.reshape(n, c, h, w)
        grad_x = np.zeros(x.shape)
        for idx in range(k * k):
            u, v = divmod(idx, k)
            mask = self._window(x, u, v, ho, wo) == out
            mask &= unclaimed
            np.multiply(grad_out, mask, out=buf)
            self._window(grad_x, u, v, ho, wo)[...] += buf
            if idx < k * k - 1:
                unclaimed ^= mask
        return grad_x


class GlobalAvgPool(Layer):
    """Spatial mean per channel: (N,C,H,W) -> (N,C)."""

    def __init__(self):
        self._hw = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = T.as_tensor(x)
        n, c, h, w = x.shape
        self._hw = (h, w)
        return x.mean(axis=(2, 3))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._hw is None:
            raise UsageError("avgpool backward called before forward")
        h, w = self._hw
        grad_out = T.as_tensor(grad_out)
        return np.broadcast_to(
            grad_out[:, :, None, None] / (h * w),
            grad_out.shape + (h, w),
        ).copy()


class Linear(Layer):
    """Affine map x @ w + b for (N,D) inputs."""

    def __init__(self, in_features: int, out_features: int,
                 rng: SeededRng | None = None):
        wshape = (in_features, out_features)
        if rng is None:
            wdata = T.fill_random(wshape, "zeros")
        else:
            wdata = T.fill_random(wshape, "uniform-kaiming", rng,
                                  fan_in=in_features)
        self.weight = Parameter("weight", wdata)
        self.bias = Parameter("bias", T.fill_random((out_features,), "zeros"),
                              decay=False)
        self._x = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = T.as_tensor(x)
        self._x = x
        return T.matmul(x, self.weight.data) + self.bias.data

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise UsageError("linear backward called before forward")
        grad_out = T.as_tensor(grad_out)
        self.weight.grad = T.matmul(self._x.T, grad_out)
        self.bias.grad = grad_out.sum(axis=0)
        return T.matmul(grad_out, self.weight.data.T)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy of softmax(logits) against integer labels.

    Returns (loss, grad_logits) with grad = (softmax - onehot) / N. Computed
    with max subtraction so large logits stay finite.
    """
    logits = T.as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (N,K), got {logits.shape}")
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels must be ({n},), got {labels.shape}")
    labels = labels.astype(np.int64)
    if labels.min() < 0 or labels.max() >= k:
        raise ConfigError(
            f"labels must lie in [0,{k}), got range "
            f"[{labels.min()},{labels.max()}]"
        )
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    probs = exp / total
    row = np.arange(n)
    loss = float(np.mean(np.log(total[:, 0]) - shifted[row, labels]))
    grad = probs.copy()
    grad[row, labels] -= 1.0
    grad /= n
    return loss, grad
