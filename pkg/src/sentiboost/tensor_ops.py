"""Dense-tensor layer primitives for the CNN forward pass.

Conventions used throughout:

* Tensors are numpy float32 arrays in batch x channel x height x width
  (NCHW) layout, row-major. Vectors are 1-D float32 arrays.
* Convolution is cross-correlation (no kernel flip) with zero padding and a
  single stride applied to both spatial axes.
* Every operation is a pure function; given identical inputs it returns
  bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def as_f32(x) -> np.ndarray:
    """View/convert input as a contiguous float32 array."""
    return np.ascontiguousarray(x, dtype=np.float32)


def conv_out_extent(in_extent: int, kernel: int, stride: int, padding: int) -> int:
    """Spatial output extent: floor((in + 2*padding - kernel) / stride) + 1."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    return (in_extent + 2 * padding - kernel) // stride + 1


@dataclass(frozen=True)
class Conv2dSpec:
    """Parameterization of one 2-D convolution layer."""

    out_channels: int
    in_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0
    has_bias: bool = False

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")
        if min(self.out_channels, self.in_channels, self.kernel_h, self.kernel_w) < 1:
            raise ValueError("channel and kernel extents must be >= 1")

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        oh = conv_out_extent(h, self.kernel_h, self.stride, self.padding)
        ow = conv_out_extent(w, self.kernel_w, self.stride, self.padding)
        if oh < 1 or ow < 1:
            raise ValueError(
                f"convolution of {h}x{w} input with kernel "
                f"{self.kernel_h}x{self.kernel_w}, stride {self.stride}, "
                f"padding {self.padding} yields empty output {oh}x{ow}"
            )
        return oh, ow


@dataclass(frozen=True)
class BatchNormParams:
    """Inference-mode batch normalization parameters (one value per channel)."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        for field in ("gamma", "beta", "running_mean", "running_var"):
            object.__setattr__(self, field, as_f32(getattr(self, field)).reshape(-1))
        n = self.gamma.shape[0]
        for field in ("beta", "running_mean", "running_var"):
            m = getattr(self, field).shape[0]
            if m != n:
                raise ValueError(f"batch-norm vector length mismatch: gamma has {n}, {field} has {m}")
        if np.any(self.running_var < 0):
            raise ValueError("running_var must be >= 0 elementwise")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        # epsilon == 0 is tolerated only while every variance is strictly
        # positive; otherwise the scale would divide by zero.
        if self.epsilon == 0 and np.any(self.running_var == 0):
            raise ValueError("epsilon of 0 requires strictly positive running_var")

    @property
    def num_channels(self) -> int:
        return self.gamma.shape[0]


def _check_4d(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 4:
        raise ValueError(f"{name} must be 4-D (NCHW), got shape {tuple(x.shape)}")
    return as_f32(x)


def conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    spec: Conv2dSpec,
    bias: np.ndarray | None = None,
) -> np.ndarray:
    """Cross-correlate an NCHW batch with a KCkhkw kernel stack.

    Zero padding, one stride for both axes. Output is N x K x H' x W' with
    H', W' given by the conv_out_extent formula.
    """
    x = _check_4d(x, "input")
    weight = _check_4d(weight, "weight")
    n, c, h, w = x.shape
    if tuple(weight.shape) != spec.weight_shape:
        raise ValueError(
            f"weight shape {tuple(weight.shape)} does not match spec {spec.weight_shape}"
        )
    if c != spec.in_channels:
        raise ValueError(
            f"input has {c} channels but weight expects {spec.in_channels}"
        )
    oh, ow = spec.out_hw(h, w)
    k = spec.out_channels
    kh, kw = spec.kernel_h, spec.kernel_w

    if spec.padding:
        p = spec.padding
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, :: spec.stride, :: spec.stride]  # n, c, oh, ow, kh, kw
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    out = cols @ weight.reshape(k, -1).T
    out = out.reshape(n, oh, ow, k).transpose(0, 3, 1, 2)
    if bias is not None:
        bias = as_f32(bias).reshape(-1)
        if bias.shape[0] != k:
            raise ValueError(f"bias length {bias.shape[0]} != out_channels {k}")
        out = out + bias[None, :, None, None]
    return as_f32(out)


def batchnorm_infer(x: np.ndarray, params: BatchNormParams) -> np.ndarray:
    """Per-channel gamma * (x - mean) / sqrt(var + eps) + beta."""
    x = _check_4d(x, "input")
    c = x.shape[1]
    if params.num_channels != c:
        raise ValueError(
            f"input has {c} channels but batch-norm params have {params.num_channels}"
        )
    scale = params.gamma / np.sqrt(params.running_var + np.float32(params.epsilon))
    shift = params.beta - params.running_mean * scale
    return as_f32(x * scale[None, :, None, None] + shift[None, :, None, None])


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x); shape preserved."""
    return np.maximum(as_f32(x), np.float32(0.0))


def maxpool2d(x: np.ndarray, kernel: int, stride: int, padding: int = 0) -> np.ndarray:
    """Per-window maximum; padded cells participate as -inf."""
    x = _check_4d(x, "input")
    if kernel < 1:
        raise ValueError(f"pool kernel must be >= 1, got {kernel}")
    if stride < 1:
        raise ValueError(f"pool stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"pool padding must be >= 0, got {padding}")
    n, c, h, w = x.shape
    oh = conv_out_extent(h, kernel, stride, padding)
    ow = conv_out_extent(w, kernel, stride, padding)
    if oh < 1 or ow < 1:
        raise ValueError(f"pool window yields empty output {oh}x{ow}")
    if padding:
        x = np.pad(
            x,
            ((0, 0), (0, 0), (padding, padding), (padding, padding)),
            constant_values=-np.inf,
        )
    windows = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    return as_f32(windows.max(axis=(4, 5)))


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Spatial mean per channel: NCHW -> NC."""
    x = _check_4d(x, "input")
    if x.shape[2] * x.shape[3] < 1:
        raise ValueError("global average pool needs at least one spatial cell")
    return as_f32(x.mean(axis=(2, 3)))


def dense(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Affine map: [N, D] @ [D, M] + bias[M]."""
    x = as_f32(np.asarray(x))
    weight = as_f32(np.asarray(weight))
    if x.ndim != 2 or weight.ndim != 2:
        raise ValueError(
            f"dense expects 2-D input and weight, got {tuple(x.shape)} and {tuple(weight.shape)}"
        )
    if x.shape[1] != weight.shape[0]:
        raise ValueError(
            f"inner dimensions disagree: input has {x.shape[1]} columns, weight has "
            f"{weight.shape[0]} rows"
        )
    out = x @ weight
    if bias is not None:
        bias = as_f32(bias).reshape(-1)
        if bias.shape[0] != weight.shape[1]:
            raise ValueError(f"bias length {bias.shape[0]} != output width {weight.shape[1]}")
        out = out + bias[None, :]
    return as_f32(out)


def softmax(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for stability."""
    x = as_f32(np.asarray(x))
    if x.ndim != 2:
        raise ValueError(f"softmax expects a 2-D array, got shape {tuple(x.shape)}")
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return as_f32(e / e.sum(axis=1, keepdims=True))
