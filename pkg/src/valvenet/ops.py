"""Dense NCHW tensor kernels with hand-written backward passes.

Arrays are plain numpy ndarrays laid out [batch, channel, height, width],
row-major with width fastest.  float32 is the training dtype; float64 is
used for finite-difference gradient checks.  Every op is a pure function
of its inputs and every backward returns the exact adjoint of its forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import LabelError, ShapeMismatchError


class ConvGrads(NamedTuple):
    weights: np.ndarray
    bias: np.ndarray


@dataclass
class GradPair:
    """A parameter tensor together with its accumulated gradient."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise ShapeMismatchError("GradPair grad", self.value.shape, self.grad.shape)

    def zero_grad(self) -> None:
        self.grad.fill(0)


@dataclass
class ConvParams:
    """Convolution weights [k_out, c_in, kh, kw] plus bias [k_out].

    Padding is symmetric zero padding of (kh//2, kw//2), so a stride-1
    output has the same spatial extent as the input and a stride-s output
    has extent ceil(extent / s).  Kernel extents must be odd.
    """

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ValueError(f"conv weights must be rank 4, got shape {self.weights.shape}")
        k_out, _, kh, kw = self.weights.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"kernel extents must be odd for symmetric padding, got {kh}x{kw}")
        if self.bias.shape != (k_out,):
            raise ShapeMismatchError("conv bias", (k_out,), self.bias.shape)
        if self.stride < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")

    @property
    def k_out(self) -> int:
        return self.weights.shape[0]

    @property
    def c_in(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]


def _out_extent(extent: int, k: int, stride: int) -> int:
    return (extent + 2 * (k // 2) - k) // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> tuple[np.ndarray, int, int]:
    """Unfold x [n,c,h,w] into columns [n, c*kh*kw, oh*ow]."""
    n, c, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    oh = _out_extent(h, kh, stride)
    ow = _out_extent(w, kw, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.reshape(n, c * kh * kw, oh * ow), oh, ow


def _col2im(cols: np.ndarray, shape: tuple[int, int, int, int], kh: int, kw: int, stride: int) -> np.ndarray:
    """Adjoint of _im2col: fold columns back, summing overlaps."""
    n, c, h, w = shape
    ph, pw = kh // 2, kw // 2
    oh = _out_extent(h, kh, stride)
    ow = _out_extent(w, kw, stride)
    folded = cols.reshape(n, c, kh, kw, oh, ow)
    xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += folded[:, :, i, j]
    return xp[:, :, ph : ph + h, pw : pw + w]


def conv2d_forward(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Zero-padded convolution with bias; output [n, k_out, ceil(h/s), ceil(w/s)]."""
    if x.ndim != 4 or x.shape[1] != p.c_in:
        raise ShapeMismatchError(
            f"conv input channels (weights {p.weights.shape})",
            ("n", p.c_in, "h", "w"),
            x.shape,
        )
    kh, kw = p.kernel
    cols, oh, ow = _im2col(x, kh, kw, p.stride)
    out = np.matmul(p.weights.reshape(p.k_out, -1), cols)
    out += p.bias[:, None]
    return out.reshape(x.shape[0], p.k_out, oh, ow)


def conv2d_backward(x: np.ndarray, p: ConvParams, upstream: np.ndarray):
    """Adjoints of conv2d_forward: (grad_input, grad_weights, grad_bias)."""
    kh, kw = p.kernel
    n = x.shape[0]
    oh = _out_extent(x.shape[2], kh, p.stride)
    ow = _out_extent(x.shape[3], kw, p.stride)
    if upstream.shape != (n, p.k_out, oh, ow):
        raise ShapeMismatchError("conv upstream", (n, p.k_out, oh, ow), upstream.shape)
    cols, _, _ = _im2col(x, kh, kw, p.stride)
    up = upstream.reshape(n, p.k_out, oh * ow)
    grad_bias = upstream.sum(axis=(0, 2, 3))
    grad_w = np.matmul(up, cols.transpose(0, 2, 1)).sum(axis=0).reshape(p.weights.shape)
    grad_cols = np.matmul(p.weights.reshape(p.k_out, -1).T, up)
    grad_x = _col2im(grad_cols, x.shape, kh, kw, p.stride)
    return grad_x, grad_w, grad_bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    # derivative at exactly 0 is defined as 0
    return np.where(x > 0, upstream, 0)


def elemwise_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeMismatchError("elemwise_mul operands", a.shape, b.shape)
    return a * b


def elemwise_mul_backward(a: np.ndarray, b: np.ndarray, upstream: np.ndarray):
    if a.shape != b.shape:
        raise ShapeMismatchError("elemwise_mul operands", a.shape, b.shape)
    if upstream.shape != a.shape:
        raise ShapeMismatchError("elemwise_mul upstream", a.shape, upstream.shape)
    return upstream * b, upstream * a


def upsample_nearest(x: np.ndarray, factor: int) -> np.ndarray:
    """Replicate each element into a factor x factor block."""
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return x.copy()
    return np.repeat(np.repeat(x, factor, axis=2), factor, axis=3)


def upsample_nearest_backward(upstream: np.ndarray, factor: int) -> np.ndarray:
    """Sum each factor x factor block back into its source element."""
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    n, c, h, w = upstream.shape
    if h % factor or w % factor:
        raise ShapeMismatchError("upsample upstream", (n, c, f"{factor}*h", f"{factor}*w"), upstream.shape)
    return upstream.reshape(n, c, h // factor, factor, w // factor, factor).sum(axis=(3, 5))


def softmax_cross_entropy(
    logits: np.ndarray,
    labels: np.ndarray,
    ignore_label: int | None = None,
):
    """Per-pixel softmax cross entropy, averaged over non-ignored pixels.

    logits: [n, C, h, w]; labels: integer plane [n, h, w].  Returns
    (loss, grad_logits) where grad_logits is the exact adjoint of the
    mean loss and is zero at ignored pixels.  Stabilized by per-pixel
    max subtraction.
    """
    n, n_classes, h, w = logits.shape
    if labels.shape != (n, h, w):
        raise ShapeMismatchError("labels", (n, h, w), labels.shape)
    labels = labels.astype(np.int64, copy=False)
    if ignore_label is not None:
        valid = labels != ignore_label
    else:
        valid = np.ones(labels.shape, dtype=bool)
    bad = valid & ((labels < 0) | (labels >= n_classes))
    if bad.any():
        ni, yi, xi = (int(v) for v in np.argwhere(bad)[0])
        raise LabelError(
            f"label {int(labels[ni, yi, xi])} out of range [0, {n_classes}) "
            f"at pixel (sample={ni}, y={yi}, x={xi})"
        )

    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)

    n_valid = int(valid.sum())
    if n_valid == 0:
        return 0.0, np.zeros_like(logits)

    safe_labels = np.where(valid, labels, 0)
    picked = np.take_along_axis(log_probs, safe_labels[:, None], axis=1)[:, 0]
    loss = -(picked * valid).sum() / n_valid

    grad = exp / denom
    one_hot_rows = np.zeros_like(grad)
    np.put_along_axis(one_hot_rows, safe_labels[:, None], 1, axis=1)
    grad -= one_hot_rows
    grad *= (valid[:, None] / n_valid).astype(grad.dtype)
    return float(loss), grad
