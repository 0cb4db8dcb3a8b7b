"""Micro encoder-decoder FCN parameterized by ROI strategy and head mode.

The backbone is deliberately small: a strategy-specific first layer, two
stride-2 conv+relu stages, one stride-1 conv+relu stage, a nearest-
neighbor x4 upsample, a skip connection from the first-layer output, and
one 1x1 conv per prediction head emitting per-pixel logits at input
resolution.  The ROI mechanism under test lives entirely in the first
layer; everything above it is shared across strategies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError
from .ops import (
    ConvParams,
    GradPair,
    conv2d_backward,
    conv2d_forward,
    relu,
    relu_backward,
    upsample_nearest,
    upsample_nearest_backward,
)
from .valve import (
    ValveActivations,
    ValveLayerParams,
    blackout_apply,
    blackout_backward,
    concat_roi_channel,
    init_valve_layer,
    valve_backward,
    valve_forward,
    validate_roi,
)

STRATEGIES = ("none", "valve", "blackout", "concat")
UPSAMPLE_FACTOR = 4  # product of the two stride-2 stages


@dataclass
class ModelSpec:
    """Architecture descriptor: ROI strategy, head layout, and widths."""

    strategy: str = "valve"
    head_mode: str = "multi"  # 'single' or 'multi'
    head_level: int | None = None  # annotation level 1..4, single mode only
    first_layer_filters: int = 16
    encoder_widths: tuple[int, int, int] = (24, 32, 32)
    input_channels: int = 3
    class_counts: tuple[int, int, int, int] = (2, 3, 4, 15)

    def __post_init__(self):
        self.encoder_widths = tuple(self.encoder_widths)
        self.class_counts = tuple(self.class_counts)
        self.validate()

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}, expected one of {STRATEGIES}")
        if self.head_mode not in ("single", "multi"):
            raise ValueError(f"head_mode must be 'single' or 'multi', got {self.head_mode!r}")
        if self.head_mode == "single":
            if self.head_level not in (1, 2, 3, 4):
                raise ValueError(f"single head mode needs head_level in 1..4, got {self.head_level!r}")
        elif self.head_level is not None:
            raise ValueError("multi head mode takes no head_level")
        if len(self.encoder_widths) != 3 or min(self.encoder_widths) < 1:
            raise ValueError(f"encoder_widths must be 3 positive counts, got {self.encoder_widths}")
        if len(self.class_counts) != 4 or min(self.class_counts) < 2:
            raise ValueError(f"class_counts must list 4 levels of >=2 classes, got {self.class_counts}")
        if self.first_layer_filters < 1 or self.input_channels < 1:
            raise ValueError("filter and channel counts must be positive")

    @property
    def needs_roi(self) -> bool:
        return self.strategy != "none"

    @property
    def head_levels(self) -> tuple[int, ...]:
        if self.head_mode == "single":
            return (self.head_level,)
        return (1, 2, 3, 4)

    def classes_for(self, level: int) -> int:
        return self.class_counts[level - 1]


@dataclass
class _Cache:
    image: np.ndarray
    roi: np.ndarray | None
    first_input: np.ndarray  # what the first conv consumed (image or image+roi channel)
    valve_acts: ValveActivations | None
    first_pre: np.ndarray | None  # pre-relu first conv output (non-valve strategies)
    a0: np.ndarray  # first-layer output fed to enc1 and the skip
    enc_pre: list = field(default_factory=list)
    enc_post: list = field(default_factory=list)
    fused: np.ndarray | None = None


class Model:
    """A trainable instance: spec + named parameters + forward/backward.

    Single-writer: forward/backward and optimizer steps must not run
    concurrently on one instance.  Parameters are held as GradPair
    entries in declared architecture order (the checkpoint block order).
    """

    def __init__(self, spec: ModelSpec, seed: int, dtype=np.float32):
        spec.validate()
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.params: dict[str, GradPair] = {}
        self._cache: _Cache | None = None
        self._init_params(np.random.default_rng(seed))

    # -- construction -------------------------------------------------

    def _he_conv(self, rng, k_out, c_in, kh=3, kw=3) -> np.ndarray:
        std = np.sqrt(2.0 / (c_in * kh * kw))
        return (rng.standard_normal((k_out, c_in, kh, kw)) * std).astype(self.dtype)

    def _init_params(self, rng: np.random.Generator) -> None:
        s = self.spec
        k = s.first_layer_filters
        w1, w2, w3 = s.encoder_widths
        if s.strategy == "valve":
            layer = init_valve_layer(k, s.input_channels, 3, 3, rng, dtype=self.dtype)
            self._add("first.image.weight", layer.image_conv.weights)
            self._add("first.image.bias", layer.image_conv.bias)
            self._add("first.valve.weight", layer.valve_conv.weights)
            self._add("first.valve.bias", layer.valve_conv.bias)
        else:
            c_in = s.input_channels + (1 if s.strategy == "concat" else 0)
            self._add("first.weight", self._he_conv(rng, k, c_in))
            self._add("first.bias", np.zeros(k, dtype=self.dtype))
        self._add("enc1.weight", self._he_conv(rng, w1, k))
        self._add("enc1.bias", np.zeros(w1, dtype=self.dtype))
        self._add("enc2.weight", self._he_conv(rng, w2, w1))
        self._add("enc2.bias", np.zeros(w2, dtype=self.dtype))
        self._add("enc3.weight", self._he_conv(rng, w3, w2))
        self._add("enc3.bias", np.zeros(w3, dtype=self.dtype))
        fused = w3 + k
        for level in self.spec.head_levels:
            self._add(f"head{level}.weight", self._he_conv(rng, s.classes_for(level), fused, 1, 1))
            self._add(f"head{level}.bias", np.zeros(s.classes_for(level), dtype=self.dtype))

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = GradPair(value)

    def _conv(self, name: str, stride: int = 1) -> ConvParams:
        return ConvParams(self.params[f"{name}.weight"].value, self.params[f"{name}.bias"].value, stride=stride)

    def _valve_params(self) -> ValveLayerParams:
        return ValveLayerParams(
            ConvParams(self.params["first.image.weight"].value, self.params["first.image.bias"].value),
            ConvParams(self.params["first.valve.weight"].value, self.params["first.valve.bias"].value),
        )

    # -- inference ----------------------------------------------------

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def forward(self, image: np.ndarray, roi: np.ndarray | None = None,
                retain: bool = True) -> dict[int, np.ndarray]:
        """Run the net; returns {level: logits [n, C_level, h, w]}.

        With retain (default) activations are kept for a backward call;
        pass retain=False for inference to avoid holding them.
        """
        s = self.spec
        image = np.ascontiguousarray(image, dtype=self.dtype)
        if image.ndim != 4 or image.shape[1] != s.input_channels:
            raise ShapeMismatchError("model input", ("n", s.input_channels, "h", "w"), image.shape)
        n, _, h, w = image.shape
        if h % UPSAMPLE_FACTOR or w % UPSAMPLE_FACTOR:
            raise ValueError(f"input extents must be multiples of {UPSAMPLE_FACTOR}, got {h}x{w}")
        if s.needs_roi:
            if roi is None:
                raise ValueError(f"strategy {s.strategy!r} requires an ROI mask")
            roi = validate_roi(np.ascontiguousarray(roi, dtype=self.dtype))
            if roi.shape[0] != n or roi.shape[2:] != (h, w):
                raise ShapeMismatchError("roi", (n, 1, h, w), roi.shape)
        elif roi is not None:
            raise ValueError("strategy 'none' takes no ROI input")

        valve_acts = None
        first_pre = None
        if s.strategy == "valve":
            valve_acts = valve_forward(image, roi, self._valve_params())
            a0 = valve_acts.output
            first_input = image
        elif s.strategy == "concat":
            first_input = concat_roi_channel(image, roi)
            first_pre = conv2d_forward(first_input, self._conv("first"))
            a0 = relu(first_pre)
        else:
            first_input = image
            first_pre = conv2d_forward(first_input, self._conv("first"))
            a0 = relu(first_pre)
            if s.strategy == "blackout":
                a0 = blackout_apply(a0, roi)

        cache = _Cache(image, roi, first_input, valve_acts, first_pre, a0)
        x = a0
        for i, stride in zip((1, 2, 3), (2, 2, 1)):
            pre = conv2d_forward(x, self._conv(f"enc{i}", stride=stride))
            x = relu(pre)
            cache.enc_pre.append(pre)
            cache.enc_post.append(x)
        up = upsample_nearest(x, UPSAMPLE_FACTOR)
        cache.fused = np.concatenate([up, a0], axis=1)

        logits = {
            level: conv2d_forward(cache.fused, self._conv(f"head{level}"))
            for level in s.head_levels
        }
        self._cache = cache if retain else None
        return logits

    def backward(self, grad_logits: dict[int, np.ndarray]) -> None:
        """Accumulate parameter gradients for the retained forward pass.

        grad_logits maps head level -> cotangent; heads absent from the
        map contribute nothing.
        """
        if self._cache is None:
            raise RuntimeError("backward called without a retained forward pass")
        c = self._cache
        s = self.spec
        w3 = s.encoder_widths[2]

        d_fused = np.zeros_like(c.fused)
        for level, g in grad_logits.items():
            if level not in s.head_levels:
                raise ValueError(f"model has no head for level {level}")
            gi, gw, gb = conv2d_backward(c.fused, self._conv(f"head{level}"), g)
            self.params[f"head{level}.weight"].grad += gw
            self.params[f"head{level}.bias"].grad += gb
            d_fused += gi

        d_up = d_fused[:, :w3]
        d_skip = d_fused[:, w3:]
        d = upsample_nearest_backward(d_up, UPSAMPLE_FACTOR)
        for i, stride in zip((3, 2, 1), (1, 2, 2)):
            d = relu_backward(c.enc_pre[i - 1], d)
            below = c.enc_post[i - 2] if i > 1 else c.a0
            gi, gw, gb = conv2d_backward(below, self._conv(f"enc{i}", stride=stride), d)
            self.params[f"enc{i}.weight"].grad += gw
            self.params[f"enc{i}.bias"].grad += gb
            d = gi
        d_a0 = d + d_skip

        if s.strategy == "valve":
            g_img, g_valve, _ = valve_backward(c.valve_acts, c.image, c.roi, self._valve_params(), d_a0)
            self.params["first.image.weight"].grad += g_img.weights
            self.params["first.image.bias"].grad += g_img.bias
            self.params["first.valve.weight"].grad += g_valve.weights
            self.params["first.valve.bias"].grad += g_valve.bias
        else:
            if s.strategy == "blackout":
                d_a0 = blackout_backward(d_a0, c.roi)
            d_pre = relu_backward(c.first_pre, d_a0)
            _, gw, gb = conv2d_backward(c.first_input, self._conv("first"), d_pre)
            self.params["first.weight"].grad += gw
            self.params["first.bias"].grad += gb

    # -- parameter access ---------------------------------------------

    def param_values(self) -> dict[str, np.ndarray]:
        return {name: p.value for name, p in self.params.items()}

    def set_param_values(self, values: dict[str, np.ndarray]) -> None:
        for name, v in values.items():
            tgt = self.params[name].value
            if v.shape != tgt.shape:
                raise ShapeMismatchError(f"parameter {name}", tgt.shape, v.shape)
            tgt[...] = v

    def copy(self) -> "Model":
        clone = Model(self.spec, seed=0, dtype=self.dtype)
        clone.set_param_values(self.param_values())
        return clone
