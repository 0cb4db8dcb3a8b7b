"""Per-class IOU evaluation and the strategy comparison table."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import LabelError, ShapeMismatchError
from .model import Model
from .scenes import PHASE_NAMES, LabeledSample

CLASS_NAMES = {
    1: ("Background", "Vessel"),
    2: ("Background", "Empty", "Filled"),
    3: ("Background", "Empty", "Liquid", "Solid"),
    4: PHASE_NAMES,
}

LEVEL_GROUP_NAMES = {
    1: "Vessel region",
    2: "Fill level",
    3: "Solid/Liquid",
    4: "Exact physical phase",
}


def percent(x: float) -> str:
    """Render a 0..1 ratio as an integer percentage, rounding half up
    in decimal (0.825 -> '83%', where float arithmetic would give 82)."""
    q = (Decimal(str(float(x))) * 100).quantize(Decimal("1"), rounding=ROUND_HALF_UP)
    return f"{q}%"


@dataclass
class ClassIou:
    """Intersection/union pixel counts for one class; iou is None when
    the class is absent from both prediction and ground truth."""

    class_id: int
    name: str
    intersection: int
    union: int
    iou: float | None = None

    def __post_init__(self):
        if self.intersection > self.union:
            raise ValueError(
                f"class {self.class_id}: intersection {self.intersection} exceeds union {self.union}"
            )
        if self.iou is None and self.union > 0:
            self.iou = self.intersection / self.union


@dataclass
class LevelIou:
    level: int
    classes: list

    def class_iou(self, class_id: int) -> float | None:
        return self.classes[class_id].iou

    def mean_iou(self) -> float:
        """Mean over classes present in prediction or ground truth."""
        present = [c.iou for c in self.classes if c.iou is not None]
        if not present:
            return 0.0
        return float(np.mean(present))


@dataclass
class IouReport:
    """Per-level, per-class IOU, plus the variant where predictions
    outside the ground-truth vessel region are ignored."""

    levels: dict = field(default_factory=dict)  # level -> LevelIou
    masked_levels: dict = field(default_factory=dict)
    per_image: bool = False

    def iou(self, level: int, class_id: int, masked: bool = False) -> float | None:
        table = self.masked_levels if masked else self.levels
        return table[level].class_iou(class_id)

    def mean(self, level: int, masked: bool = False) -> float:
        table = self.masked_levels if masked else self.levels
        return table[level].mean_iou()


def _confusion(pred: np.ndarray, gt: np.ndarray, n_classes: int,
               mask: np.ndarray | None = None) -> np.ndarray:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError("prediction vs ground truth", gt.shape, pred.shape)
    p = pred.reshape(-1).astype(np.int64)
    g = gt.reshape(-1).astype(np.int64)
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != gt.shape:
            raise ShapeMismatchError("region mask", gt.shape, mask.shape)
        keep = mask.reshape(-1).astype(bool)
        p = p[keep]
        g = g[keep]
    for name, v in (("prediction", p), ("ground truth", g)):
        if v.size and (v.min() < 0 or v.max() >= n_classes):
            raise LabelError(f"{name} contains class id outside 0..{n_classes - 1}")
    return np.bincount(g * n_classes + p, minlength=n_classes * n_classes).reshape(
        n_classes, n_classes
    )


def iou_per_class(pred: np.ndarray, gt: np.ndarray, n_classes: int,
                  mask_to_region: np.ndarray | None = None,
                  names=None) -> list:
    """Aggregated per-class IOU rows over all supplied pixels.

    With mask_to_region, pixels outside the mask are excluded from every
    count (both prediction and ground truth restricted).
    """
    cm = _confusion(pred, gt, n_classes, mask_to_region)
    inter = np.diag(cm)
    union = cm.sum(axis=0) + cm.sum(axis=1) - inter
    if names is None:
        names = [f"class {c}" for c in range(n_classes)]
    return [
        ClassIou(c, names[c], int(inter[c]), int(union[c]))
        for c in range(n_classes)
    ]


def _roi_from_source(model: Model, roi_source, images: np.ndarray,
                     gt_roi: np.ndarray) -> np.ndarray | None:
    if isinstance(roi_source, Model):
        if 1 not in roi_source.spec.head_levels or roi_source.spec.classes_for(1) != 2:
            raise ValueError("ROI-predicting model must have a 2-class level-1 head")
        logits = roi_source.forward(images, retain=False)[1]
        pred = np.argmax(logits, axis=1)
        return (pred == 1)[:, None].astype(images.dtype)
    if roi_source == "gt":
        return gt_roi
    if roi_source == "none":
        if model.spec.needs_roi:
            raise ValueError(
                f"strategy {model.spec.strategy!r} requires an ROI; roi_source='none' is invalid"
            )
        return None
    raise ValueError(f"unknown roi_source {roi_source!r}; use 'gt', 'none', or a vessel model")


def evaluate(model: Model, test_set: list[LabeledSample], roi_source="gt",
             batch: int = 8, per_image: bool = False) -> IouReport:
    """Per-level, per-class IOU over a test set.

    roi_source: 'gt' (ground-truth vessel plane), 'none', or a Model whose
    level-1 argmax supplies the ROI (the hierarchical pipeline).  Counts
    aggregate globally over the dataset; per_image=True instead averages
    per-image IOUs over the images where each class occurs.
    """
    if not test_set:
        raise ValueError("test set is empty")
    levels = model.spec.head_levels
    agg = {level: np.zeros((model.spec.classes_for(level),) * 2, dtype=np.int64) for level in levels}
    agg_masked = {level: np.zeros_like(agg[level]) for level in levels}
    pi_sum = {level: np.zeros(model.spec.classes_for(level)) for level in levels}
    pi_cnt = {level: np.zeros(model.spec.classes_for(level), dtype=np.int64) for level in levels}
    pi_sum_m = {level: np.zeros(model.spec.classes_for(level)) for level in levels}
    pi_cnt_m = {level: np.zeros(model.spec.classes_for(level), dtype=np.int64) for level in levels}

    for start in range(0, len(test_set), batch):
        chunk = test_set[start : start + batch]
        images = np.concatenate([s.image for s in chunk], axis=0)
        gt_roi = np.concatenate([s.roi for s in chunk], axis=0)
        roi = _roi_from_source(model, roi_source, images, gt_roi)
        roi = roi if model.spec.needs_roi else None
        logits = model.forward(images, roi=roi, retain=False)
        vessel_region = gt_roi[:, 0] > 0
        for level in levels:
            n_classes = model.spec.classes_for(level)
            pred = np.argmax(logits[level], axis=1)
            gt = np.stack([s.labels.plane(level) for s in chunk])
            agg[level] += _confusion(pred, gt, n_classes)
            agg_masked[level] += _confusion(pred, gt, n_classes, vessel_region)
            if per_image:
                for i in range(len(chunk)):
                    for masked, sums, cnts in (
                        (None, pi_sum, pi_cnt),
                        (vessel_region[i], pi_sum_m, pi_cnt_m),
                    ):
                        rows = iou_per_class(pred[i], gt[i], n_classes, masked)
                        for row in rows:
                            if row.iou is not None:
                                sums[level][row.class_id] += row.iou
                                cnts[level][row.class_id] += 1

    report = IouReport(per_image=per_image)
    for level in levels:
        names = CLASS_NAMES[level]
        for table, cm_map, sums, cnts in (
            (report.levels, agg, pi_sum, pi_cnt),
            (report.masked_levels, agg_masked, pi_sum_m, pi_cnt_m),
        ):
            cm = cm_map[level]
            inter = np.diag(cm)
            union = cm.sum(axis=0) + cm.sum(axis=1) - inter
            rows = []
            for c in range(len(names)):
                iou = None
                if per_image:
                    if cnts[level][c] > 0:
                        iou = float(sums[level][c] / cnts[level][c])
                elif union[c] > 0:
                    iou = inter[c] / union[c]
                rows.append(ClassIou(c, names[c], int(inter[c]), int(union[c]), iou=iou))
            table[level] = LevelIou(level, rows)
    return report


def hierarchical_segment(vessel_net: Model, content_net: Model, image: np.ndarray) -> dict:
    """Two-stage segmentation from a bare image: the vessel net's level-1
    argmax becomes the ROI for the content net; returns the content net's
    argmax plane per level."""
    if 1 not in vessel_net.spec.head_levels or vessel_net.spec.classes_for(1) != 2:
        raise ValueError("vessel net must emit 2-class level-1 logits")
    vessel_logits = vessel_net.forward(image, retain=False)[1]
    roi = (np.argmax(vessel_logits, axis=1) == 1)[:, None].astype(image.dtype)
    roi_arg = roi if content_net.spec.needs_roi else None
    logits = content_net.forward(image, roi=roi_arg, retain=False)
    return {level: np.argmax(lg, axis=1) for level, lg in logits.items()}


def _check_same_structure(reports: dict) -> list:
    shapes = None
    for name, report in reports.items():
        shape = {level: len(li.classes) for level, li in sorted(report.levels.items())}
        if shapes is None:
            shapes = shape
        elif shape != shapes:
            raise ValueError(
                f"report {name!r} has class structure {shape}, expected {shapes}"
            )
    return sorted(shapes)


def emit_comparison_table(reports: dict, fmt: str = "text", masked: bool = False) -> str:
    """Render strategy-comparison IOU, one column per report (dict order),
    rows grouped by annotation level.

    fmt 'text': aligned table with the row groups 'Vessel region',
    'Fill level', 'Solid/Liquid', 'Exact physical phase' and integer
    percentages (decimal half-up).  fmt 'csv': long form with columns
    level,class,strategy,iou.
    """
    if not reports:
        raise ValueError("no reports to compare")
    levels = _check_same_structure(reports)
    columns = list(reports)

    def cell(report, level, class_id):
        iou = report.iou(level, class_id, masked=masked)
        return percent(iou) if iou is not None else "n/a"

    if fmt == "csv":
        out = io.StringIO()
        out.write("level,class,strategy,iou\n")
        for level in levels:
            names = CLASS_NAMES[level]
            for class_id, name in enumerate(names):
                for col in columns:
                    iou = reports[col].iou(level, class_id, masked=masked)
                    value = "" if iou is None else f"{iou:.6f}"
                    out.write(f"{level},{name},{col},{value}\n")
        return out.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown table format {fmt!r}; use 'text' or 'csv'")

    label_width = max(
        [len("  " + name) for level in levels for name in CLASS_NAMES[level]]
        + [len(LEVEL_GROUP_NAMES[level]) for level in levels]
        + [len("  (mean)")]
    )
    col_width = max([len(c) for c in columns] + [len("absent")]) + 2
    lines = []
    header = " " * label_width + "".join(f"{c:>{col_width}}" for c in columns)
    lines.append(header)
    lines.append("-" * len(header))
    for level in levels:
        lines.append(LEVEL_GROUP_NAMES[level])
        for class_id, name in enumerate(CLASS_NAMES[level]):
            row = f"  {name}".ljust(label_width)
            row += "".join(f"{cell(reports[c], level, class_id):>{col_width}}" for c in columns)
            lines.append(row)
        mean_row = "  (mean)".ljust(label_width)
        table_attr = "masked_levels" if masked else "levels"
        for c in columns:
            mean_row += f"{percent(getattr(reports[c], table_attr)[level].mean_iou()):>{col_width}}"
        lines.append(mean_row)
    return "\n".join(lines) + "\n"
