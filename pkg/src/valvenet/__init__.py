"""ROI-gated convolutional segmentation on synthetic vessel scenes.

The first layer of the net can be focused on an arbitrary region of
interest by convolving learned gate kernels with the binary ROI mask and
multiplying the resulting relevance maps into the image feature maps,
position by position, before the nonlinearity.  Alongside it live the
standard comparison strategies (no ROI, feature blackout, extra input
channel), a four-level vessel-content label schema with a procedural
scene generator, IOU evaluation, and a two-net hierarchical pipeline.
"""

from .benchmark import (
    BenchmarkConfig,
    BenchmarkResult,
    relevance_region_stats,
    run_benchmark,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .data_io import load_dataset, load_sample, make_splits, save_dataset
from .errors import (
    CheckpointError,
    ConfigError,
    LabelError,
    ShapeMismatchError,
    ValveNetError,
)
from .gradcheck import GradCheckReport, grad_check
from .metrics import (
    ClassIou,
    IouReport,
    emit_comparison_table,
    evaluate,
    hierarchical_segment,
    iou_per_class,
)
from .model import STRATEGIES, Model, ModelSpec
from .ops import (
    ConvParams,
    conv2d_backward,
    conv2d_forward,
    relu,
    relu_backward,
    softmax_cross_entropy,
    upsample_nearest,
    upsample_nearest_backward,
)
from .optim import AdamState, adam_step
from .scenes import (
    LabeledSample,
    LabelStack,
    SceneConfig,
    generate_scene,
    project_labels,
    standard_families,
)
from .training import LossLog, TrainConfig, pixel_accuracy, predict_labels, train
from .valve import (
    ValveActivations,
    ValveLayerParams,
    blackout_apply,
    concat_roi_channel,
    init_valve_layer,
    valve_backward,
    valve_forward,
)
from .viz import default_palette, render_overlay, render_signed_map

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BenchmarkConfig",
    "BenchmarkResult",
    "CheckpointError",
    "ClassIou",
    "ConfigError",
    "ConvParams",
    "GradCheckReport",
    "IouReport",
    "LabelError",
    "LabelStack",
    "LabeledSample",
    "LossLog",
    "Model",
    "ModelSpec",
    "RunConfig",
    "STRATEGIES",
    "SceneConfig",
    "ShapeMismatchError",
    "TrainConfig",
    "ValveActivations",
    "ValveLayerParams",
    "ValveNetError",
    "adam_step",
    "blackout_apply",
    "concat_roi_channel",
    "conv2d_backward",
    "conv2d_forward",
    "default_palette",
    "emit_comparison_table",
    "evaluate",
    "generate_scene",
    "grad_check",
    "hierarchical_segment",
    "init_valve_layer",
    "iou_per_class",
    "load_checkpoint",
    "load_dataset",
    "load_sample",
    "make_splits",
    "pixel_accuracy",
    "predict_labels",
    "project_labels",
    "relevance_region_stats",
    "relu",
    "relu_backward",
    "render_overlay",
    "render_signed_map",
    "run_benchmark",
    "save_checkpoint",
    "save_dataset",
    "softmax_cross_entropy",
    "standard_families",
    "train",
    "upsample_nearest",
    "upsample_nearest_backward",
    "valve_backward",
    "valve_forward",
]
