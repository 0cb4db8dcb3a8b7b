"""ROI-gated first convolution layer plus the two baseline ROI adapters.

The gated layer runs two convolutions side by side: image filters over the
image produce a feature map, and one valve filter per image filter runs
over the binary ROI mask to produce a relevance map of identical shape.
The elementwise product of the two (the gated feature map) passes through
a RELU and becomes the input to the rest of the net.  A relevance value
can scale, suppress, or sign-flip a feature, so a negative feature under a
negative relevance survives the RELU.

Baselines: blackout (zero first-layer features outside the ROI, discarding
background context) and concat (append the ROI mask as an extra input
channel).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .ops import (
    ConvGrads,
    ConvParams,
    conv2d_backward,
    conv2d_forward,
    elemwise_mul,
    elemwise_mul_backward,
    relu,
    relu_backward,
)


@dataclass
class ValveLayerParams:
    """Paired image and valve convolutions for the gated first layer.

    Both convolutions share filter count, kernel extents, and stride, so
    feature and relevance maps always have identical shape.
    """

    image_conv: ConvParams
    valve_conv: ConvParams

    def __post_init__(self):
        if self.valve_conv.c_in != 1:
            raise ValueError(f"valve filters take the 1-channel ROI mask, got c_in={self.valve_conv.c_in}")
        if self.image_conv.k_out != self.valve_conv.k_out:
            raise ValueError(
                f"image and valve filter counts differ: {self.image_conv.k_out} vs {self.valve_conv.k_out}"
            )
        if self.image_conv.kernel != self.valve_conv.kernel:
            raise ValueError(
                f"image and valve kernel extents differ: {self.image_conv.kernel} vs {self.valve_conv.kernel}"
            )
        if self.image_conv.stride != self.valve_conv.stride:
            raise ValueError(
                f"image and valve strides differ: {self.image_conv.stride} vs {self.valve_conv.stride}"
            )


@dataclass
class ValveActivations:
    """Retained intermediates of one gated forward pass.

    feature_map and relevance_map are the two convolution outputs,
    gated_map is their elementwise product (pre-RELU), output is
    post-RELU.  All four share one shape.
    """

    feature_map: np.ndarray
    relevance_map: np.ndarray
    gated_map: np.ndarray
    output: np.ndarray


def validate_roi(roi: np.ndarray) -> np.ndarray:
    """Check an ROI mask: [n, 1, h, w] with values exactly 0 or 1."""
    if roi.ndim != 4 or roi.shape[1] != 1:
        raise ShapeMismatchError("roi mask", ("n", 1, "h", "w"), roi.shape)
    bad = (roi != 0) & (roi != 1)
    if bad.any():
        v = roi[bad][0]
        raise ValueError(f"roi mask must be binary; found value {v!r} (soft masks are rejected at ingestion)")
    return roi


def valve_forward(image: np.ndarray, roi: np.ndarray, p: ValveLayerParams) -> ValveActivations:
    """Gated first-layer forward: relu(conv(image) * conv(roi))."""
    validate_roi(roi)
    if image.shape[0] != roi.shape[0] or image.shape[2:] != roi.shape[2:]:
        raise ShapeMismatchError("roi vs image spatial extents", image.shape, roi.shape)
    feature = conv2d_forward(image, p.image_conv)
    relevance = conv2d_forward(roi, p.valve_conv)
    gated = elemwise_mul(feature, relevance)
    return ValveActivations(feature, relevance, gated, relu(gated))


def valve_backward(
    acts: ValveActivations,
    image: np.ndarray,
    roi: np.ndarray,
    p: ValveLayerParams,
    upstream: np.ndarray,
) -> tuple[ConvGrads, ConvGrads, np.ndarray]:
    """Adjoints for both filter sets plus the image.

    Gradients flow to the image filters and the valve filters alike; the
    ROI mask is data, not a parameter, so no gradient is emitted for it.
    """
    if upstream.shape != acts.output.shape:
        raise ShapeMismatchError("valve upstream", acts.output.shape, upstream.shape)
    d_gated = relu_backward(acts.gated_map, upstream)
    d_feature, d_relevance = elemwise_mul_backward(acts.feature_map, acts.relevance_map, d_gated)
    grad_image, gw_img, gb_img = conv2d_backward(image, p.image_conv, d_feature)
    _, gw_valve, gb_valve = conv2d_backward(roi, p.valve_conv, d_relevance)
    return ConvGrads(gw_img, gb_img), ConvGrads(gw_valve, gb_valve), grad_image


def init_valve_layer(
    k: int,
    c_img: int,
    kh: int,
    kw: int,
    rng: np.random.Generator,
    stride: int = 1,
    dtype=np.float32,
) -> ValveLayerParams:
    """Identity-relevance initialization.

    Image filters are zero-mean Gaussian with variance 2/(c_img*kh*kw),
    bias 0.  Valve filters start at weight 0 / bias 1, so the relevance
    map is exactly 1 everywhere and the untrained layer behaves exactly
    like a plain convolution regardless of the ROI.
    """
    if min(k, c_img, kh, kw) < 1:
        raise ValueError("filter extents must be positive")
    std = np.sqrt(2.0 / (c_img * kh * kw))
    img_w = (rng.standard_normal((k, c_img, kh, kw)) * std).astype(dtype)
    image_conv = ConvParams(img_w, np.zeros(k, dtype=dtype), stride=stride)
    valve_conv = ConvParams(np.zeros((k, 1, kh, kw), dtype=dtype), np.ones(k, dtype=dtype), stride=stride)
    return ValveLayerParams(image_conv, valve_conv)


def blackout_apply(features: np.ndarray, roi: np.ndarray) -> np.ndarray:
    """Zero features outside the ROI (mask broadcast across channels)."""
    validate_roi(roi)
    if features.shape[0] != roi.shape[0] or features.shape[2:] != roi.shape[2:]:
        raise ShapeMismatchError("roi vs feature spatial extents", features.shape, roi.shape)
    return features * roi


def blackout_backward(upstream: np.ndarray, roi: np.ndarray) -> np.ndarray:
    return upstream * roi


def concat_roi_channel(image: np.ndarray, roi: np.ndarray) -> np.ndarray:
    """Append the ROI mask as one extra input channel."""
    validate_roi(roi)
    if image.shape[0] != roi.shape[0] or image.shape[2:] != roi.shape[2:]:
        raise ShapeMismatchError("roi vs image spatial extents", image.shape, roi.shape)
    return np.concatenate([image, roi.astype(image.dtype, copy=False)], axis=1)
