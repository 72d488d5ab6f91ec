"""Minimal convolutional stack: 2-D conv, max pooling, dropout, dense head.

Layout is channels-last: inputs are (batch, height, width, channels),
kernels are (k, k, in_channels, out_channels). Convolution is
cross-correlation with stride 1 and zero same-padding (pad (k-1)//2 before,
k//2 after), so spatial dimensions are preserved; only pooling shrinks them.
Each conv block applies conv -> activation -> max pool -> dropout; the head
flattens and applies one dense layer with the task output activation.
Dropout uses inverted scaling and is the identity outside training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .nn import (
    CLASSIFICATION,
    HIDDEN_ACTIVATIONS,
    REGRESSION,
    activate,
    activate_grad,
    loss,
    output_delta,
)

KERNEL_SIZES = (2, 3, 4, 5)
POOL_WINDOWS = (1, 2)


@dataclass(frozen=True)
class ConvLayerSpec:
    channels: int
    kernel_size: int
    pooling: int
    dropout_rate: float
    activation: str

    def __post_init__(self):
        if self.channels < 1:
            raise ShapeError(f"channels must be >= 1, got {self.channels}")
        if self.kernel_size not in KERNEL_SIZES:
            raise ValueError(f"kernel_size must be one of {KERNEL_SIZES}")
        if self.pooling not in POOL_WINDOWS:
            raise ValueError(f"pooling must be one of {POOL_WINDOWS}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.activation!r}")


@dataclass(frozen=True)
class CnnArchitecture:
    """Conv blocks followed by a flatten and a single dense output layer."""

    input_shape: tuple[int, int, int]  # (height, width, channels)
    conv_layers: tuple[ConvLayerSpec, ...]
    output_dim: int
    task: str

    def __post_init__(self):
        object.__setattr__(self, "conv_layers", tuple(self.conv_layers))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        h, w, c = self.input_shape
        if h < 1 or w < 1 or c < 1:
            raise ShapeError(f"bad input shape {self.input_shape}")
        if self.output_dim < 1:
            raise ShapeError("output_dim must be positive")
        if self.task not in (REGRESSION, CLASSIFICATION):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == CLASSIFICATION and self.output_dim < 2:
            raise ShapeError("classification needs output_dim >= 2")
        self.spatial_dims()  # raises if pooling collapses a dimension

    @property
    def output_activation(self) -> str:
        return "identity" if self.task == REGRESSION else "softmax"

    @property
    def flat_input_dim(self) -> int:
        h, w, c = self.input_shape
        return h * w * c

    def spatial_dims(self) -> list[tuple[int, int]]:
        """Spatial (h, w) after each conv block, input first."""
        h, w, _ = self.input_shape
        dims = [(h, w)]
        for spec in self.conv_layers:
            if spec.pooling == 2:
                h, w = h // 2, w // 2
            if h < 1 or w < 1:
                raise ShapeError("pooling collapses a spatial dimension to zero")
            dims.append((h, w))
        return dims

    def flat_dim(self) -> int:
        """Flattened feature count fed to the dense head."""
        h, w = self.spatial_dims()[-1]
        c = self.conv_layers[-1].channels if self.conv_layers else self.input_shape[2]
        return h * w * c


# --- elementary operations ---------------------------------------------------


def _pad_same(x: np.ndarray, k: int) -> np.ndarray:
    before, after = (k - 1) // 2, k // 2
    return np.pad(x, ((0, 0), (before, after), (before, after), (0, 0)))


def _conv_windows(x_padded: np.ndarray, k: int) -> np.ndarray:
    # (m, H, W, C, k, k) view over the padded input; no copy
    return sliding_window_view(x_padded, (k, k), axis=(1, 2))


def conv2d_forward(x, kernels, biases, activation: str = "identity") -> np.ndarray:
    """Stride-1, zero same-padded cross-correlation plus bias and activation.

    x: (h, w, c) or (m, h, w, c); kernels: (k, k, c, out); biases: (out,).
    Output spatial size equals input spatial size.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    kernels = np.asarray(kernels, dtype=np.float64)
    biases = np.asarray(biases, dtype=np.float64)
    if x.ndim != 4 or kernels.ndim != 4:
        raise ShapeError("conv2d_forward expects image batches and 4-D kernels")
    k = kernels.shape[0]
    if kernels.shape[1] != k:
        raise ShapeError("kernels must be square")
    if kernels.shape[2] != x.shape[3]:
        raise ShapeError(
            f"kernel input channels {kernels.shape[2]} != image channels {x.shape[3]}"
        )
    win = _conv_windows(_pad_same(x, k), k)
    z = np.einsum("mhwckl,klco->mhwo", win, kernels, optimize=True) + biases
    out = activate(activation, z)
    return out[0] if single else out


def maxpool_forward(x, window: int) -> np.ndarray:
    """window=1 is the identity; window=2 takes the max over 2x2 blocks (floor)."""
    if window not in POOL_WINDOWS:
        raise ValueError(f"pooling window must be one of {POOL_WINDOWS}")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    if window == 1:
        return x[0] if single else x
    out, _ = _maxpool_trace(x)
    return out[0] if single else out


def _maxpool_trace(x: np.ndarray):
    m, h, w, c = x.shape
    hp, wp = h // 2, w // 2
    if hp < 1 or wp < 1:
        raise ShapeError(f"pooling would collapse spatial dims {h}x{w} to zero")
    blocks = (
        x[:, : 2 * hp, : 2 * wp, :]
        .reshape(m, hp, 2, wp, 2, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(m, hp, wp, c, 4)
    )
    idx = blocks.argmax(axis=4)  # first occurrence wins ties
    pooled = np.take_along_axis(blocks, idx[..., None], axis=4)[..., 0]
    return pooled, idx


def _maxpool_backward(d_pooled: np.ndarray, idx: np.ndarray, in_shape) -> np.ndarray:
    m, h, w, c = in_shape
    hp, wp = h // 2, w // 2
    scatter = (idx[..., None] == np.arange(4)) * d_pooled[..., None]
    d_cropped = (
        scatter.reshape(m, hp, wp, c, 2, 2)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(m, 2 * hp, 2 * wp, c)
    )
    if 2 * hp == h and 2 * wp == w:
        return d_cropped
    dx = np.zeros(in_shape)
    dx[:, : 2 * hp, : 2 * wp, :] = d_cropped
    return dx


def dropout_apply(x, rate: float, seed: int = 0, training: bool = True) -> np.ndarray:
    """Inverted dropout: zero entries with probability rate, scale survivors.

    Identity when training is False or rate is 0. Deterministic per seed.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1); rate 1 zeroes the signal")
    x = np.asarray(x, dtype=np.float64)
    if not training or rate == 0.0:
        return x.copy()
    mask = np.random.default_rng(seed).random(x.shape) >= rate
    return x * mask / (1.0 - rate)


# --- parameters ---------------------------------------------------------------

# CnnParams: one (kernels, bias) pair per conv block plus the dense (W, b) head.


def init_cnn_params(arch: CnnArchitecture, seed: int) -> list:
    """Glorot-uniform kernels and dense head, zero biases."""
    rng = np.random.default_rng(seed)
    params = []
    in_c = arch.input_shape[2]
    for spec in arch.conv_layers:
        k = spec.kernel_size
        fan_in = k * k * in_c
        fan_out = k * k * spec.channels
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        kern = rng.uniform(-limit, limit, size=(k, k, in_c, spec.channels))
        params.append((kern, np.zeros(spec.channels)))
        in_c = spec.channels
    flat = arch.flat_dim()
    limit = math.sqrt(6.0 / (flat + arch.output_dim))
    w = rng.uniform(-limit, limit, size=(arch.output_dim, flat))
    params.append((w, np.zeros(arch.output_dim)))
    return params


def _check_cnn_input(arch: CnnArchitecture, x):
    """Accepts (h,w,c), (m,h,w,c), flat (p,), or flat (m,p) inputs."""
    x = np.asarray(x, dtype=np.float64)
    h, w, c = arch.input_shape
    single = False
    if x.ndim == 1 and x.size == h * w * c:
        x, single = x.reshape(1, h, w, c), True
    elif x.ndim == 2 and x.shape[1] == h * w * c:
        x = x.reshape(-1, h, w, c)
    elif x.ndim == 3 and x.shape == (h, w, c):
        x, single = x[None], True
    elif x.ndim == 4 and x.shape[1:] == (h, w, c):
        pass
    else:
        raise ShapeError(f"input shape {x.shape} does not match image shape {(h, w, c)}")
    return x, single


def _cnn_trace(arch: CnnArchitecture, params: list, x: np.ndarray, training: bool, rng):
    if len(params) != len(arch.conv_layers) + 1:
        raise ShapeError("params do not match architecture depth")
    blocks = []
    a = x
    for spec, (kern, bias) in zip(arch.conv_layers, params[:-1]):
        k = spec.kernel_size
        xp = _pad_same(a, k)
        win = _conv_windows(xp, k)
        z = np.einsum("mhwckl,klco->mhwo", win, kern, optimize=True) + bias
        act = activate(spec.activation, z)
        if spec.pooling == 2:
            pooled, pool_idx = _maxpool_trace(act)
        else:
            pooled, pool_idx = act, None
        if training and spec.dropout_rate > 0.0:
            mask = rng.random(pooled.shape) >= spec.dropout_rate
            out = pooled * mask / (1.0 - spec.dropout_rate)
        else:
            mask = None
            out = pooled
        blocks.append({"xp": xp, "z": z, "act": act, "pool_idx": pool_idx, "mask": mask})
        a = out

    m = a.shape[0]
    flat = a.reshape(m, -1)
    w_out, b_out = params[-1]
    z_out = flat @ w_out.T + b_out
    out = activate(arch.output_activation, z_out)
    return blocks, a.shape, flat, out


def cnn_forward(arch: CnnArchitecture, params: list, x, training: bool = False, rng=None) -> np.ndarray:
    """Full forward pass; dropout is active only when training with an rng."""
    x, single = _check_cnn_input(arch, x)
    if training and rng is None and any(s.dropout_rate > 0 for s in arch.conv_layers):
        raise ValueError("training-mode forward with dropout needs an rng")
    _, _, _, out = _cnn_trace(arch, params, x, training, rng)
    return out[0] if single else out


def cnn_grad_and_loss(arch: CnnArchitecture, params: list, batch_x, batch_y, rng=None):
    """Backpropagation through the conv stack; returns (grads, batch_loss).

    Dropout masks are drawn from rng (training mode); pass rng=None to
    differentiate the deterministic evaluation-mode network.
    """
    x, _ = _check_cnn_input(arch, batch_x)
    if x.shape[0] == 0:
        raise ShapeError("grad: empty batch")
    training = rng is not None
    blocks, conv_out_shape, flat, out = _cnn_trace(arch, params, x, training, rng)
    target = batch_y if arch.task == CLASSIFICATION else _as_2d(batch_y)
    batch_loss = loss(arch.task, out, target)
    delta = output_delta(arch.task, out, batch_y)

    w_out = params[-1][0]
    grads: list = [None] * len(params)
    grads[-1] = (delta.T @ flat, delta.sum(axis=0))
    d_block = (delta @ w_out).reshape(conv_out_shape)

    for i in range(len(arch.conv_layers) - 1, -1, -1):
        spec = arch.conv_layers[i]
        tr = blocks[i]
        if tr["mask"] is not None:
            d_block = d_block * tr["mask"] / (1.0 - spec.dropout_rate)
        if spec.pooling == 2:
            d_block = _maxpool_backward(d_block, tr["pool_idx"], tr["act"].shape)
        dz = d_block * activate_grad(spec.activation, tr["z"], tr["act"])

        k = spec.kernel_size
        kern = params[i][0]
        win = _conv_windows(tr["xp"], k)
        gk = np.einsum("mhwckl,mhwo->klco", win, dz, optimize=True)
        gb = dz.sum(axis=(0, 1, 2))
        grads[i] = (gk, gb)

        if i > 0:
            dxp = np.zeros_like(tr["xp"])
            h, w = dz.shape[1], dz.shape[2]
            for di in range(k):
                for dj in range(k):
                    dxp[:, di : di + h, dj : dj + w, :] += dz @ kern[di, dj].T
            before = (k - 1) // 2
            d_block = dxp[:, before : before + h, before : before + w, :]
    return grads, batch_loss


def _as_2d(y):
    y = np.asarray(y, dtype=np.float64)
    return y[:, None] if y.ndim == 1 else y
