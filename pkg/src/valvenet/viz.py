"""Raster rendering: signed-map panels, segmentation overlays, PNG I/O."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import ShapeMismatchError
from .scenes import N_PHASE_CLASSES

# class id -> RGB, background fixed to black, colors distinct per level
_PALETTES = {
    1: ((0, 0, 0), (255, 140, 0)),
    2: ((0, 0, 0), (70, 130, 180), (220, 60, 60)),
    3: ((0, 0, 0), (70, 130, 180), (60, 180, 75), (220, 60, 60)),
    4: (
        (0, 0, 0),
        (128, 128, 128),
        (70, 130, 180),
        (60, 180, 75),
        (170, 110, 40),
        (255, 225, 180),
        (255, 250, 100),
        (100, 100, 160),
        (70, 240, 240),
        (230, 190, 120),
        (150, 90, 30),
        (90, 90, 110),
        (120, 180, 120),
        (200, 120, 220),
        (230, 230, 250),
    ),
}


def default_palette(level: int) -> np.ndarray:
    """Stock palette for one annotation level, shape [n_classes, 3] uint8."""
    if level not in _PALETTES:
        raise ValueError(f"no palette for level {level}; levels are 1..4")
    return np.asarray(_PALETTES[level], dtype=np.uint8)


def _round_half_up_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def render_signed_map(plane: np.ndarray) -> np.ndarray:
    """RGB raster of a signed 2-D plane: positive green, negative red,
    intensity proportional to |value| normalized by the plane's max
    absolute value (all black when the plane is identically zero)."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ShapeMismatchError("signed map", ("h", "w"), plane.shape)
    if not np.isfinite(plane).all():
        raise ValueError("signed map contains non-finite values")
    out = np.zeros(plane.shape + (3,), dtype=np.uint8)
    m = np.abs(plane).max()
    if m == 0.0:
        return out
    scaled = 255.0 * np.abs(plane) / m
    out[..., 1] = np.where(plane > 0, _round_half_up_u8(scaled), 0)
    out[..., 0] = np.where(plane < 0, _round_half_up_u8(scaled), 0)
    return out


def _as_hwc(image: np.ndarray) -> np.ndarray:
    """Accept [h, w, 3], [3, h, w] or [1, 3, h, w] float imagery in [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 4 and image.shape[:2] == (1, 3):
        image = image[0]
    if image.ndim == 3 and image.shape[0] == 3 and image.shape[-1] != 3:
        image = image.transpose(1, 2, 0)
    if image.ndim != 3 or image.shape[-1] != 3:
        raise ShapeMismatchError("overlay image", ("h", "w", 3), image.shape)
    return image


def render_overlay(image: np.ndarray, label_plane: np.ndarray, palette: np.ndarray,
                   alpha: float) -> np.ndarray:
    """Blend class colors over an image: out = (1-alpha)*image + alpha*color.

    Background pixels (class 0) keep the image unmodified regardless of
    alpha.  Returns an 8-bit RGB raster.
    """
    img = _as_hwc(image)
    labels = np.asarray(label_plane)
    if labels.ndim == 3 and labels.shape[0] == 1:
        labels = labels[0]
    if labels.shape != img.shape[:2]:
        raise ShapeMismatchError("label plane", img.shape[:2], labels.shape)
    palette = np.asarray(palette)
    top = int(labels.max()) if labels.size else 0
    if top >= len(palette):
        raise ValueError(f"palette has {len(palette)} entries but labels contain class {top}")
    colors = palette.astype(np.float64)[labels.astype(np.int64)] / 255.0
    out = (1.0 - alpha) * img + alpha * colors
    bg = labels == 0
    out[bg] = img[bg]
    return _round_half_up_u8(out * 255.0)


def save_png(raster: np.ndarray, path) -> None:
    raster = np.asarray(raster)
    if raster.dtype != np.uint8:
        raise ValueError(f"rasters are 8-bit; got dtype {raster.dtype}")
    mode = "L" if raster.ndim == 2 else "RGB"
    Image.fromarray(raster, mode=mode).save(path)


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im)


def panels_for_sample(model, sample, out_dir) -> list:
    """Write the standard inspection rasters for one sample: the input,
    per-level prediction overlays, and (for gated strategies) every
    first-layer relevance and gated-feature signed map.  Returns the
    written paths."""
    from pathlib import Path

    from .training import predict_labels

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    raster = _round_half_up_u8(_as_hwc(sample.image) * 255.0)
    path = out_dir / "input.png"
    save_png(raster, path)
    written.append(path)

    roi = sample.roi if model.spec.needs_roi else None
    pred = predict_labels(model, sample.image, roi=roi)
    for level, plane in pred.items():
        overlay = render_overlay(sample.image, plane[0], default_palette(level), alpha=0.55)
        path = out_dir / f"pred_level{level}.png"
        save_png(overlay, path)
        written.append(path)

    if model.spec.strategy == "valve":
        from .valve import valve_forward

        acts = valve_forward(
            sample.image.astype(model.dtype), sample.roi.astype(model.dtype),
            model._valve_params(),
        )
        for k in range(acts.relevance_map.shape[1]):
            path = out_dir / f"relevance_{k:02d}.png"
            save_png(render_signed_map(acts.relevance_map[0, k]), path)
            written.append(path)
            path = out_dir / f"gated_{k:02d}.png"
            save_png(render_signed_map(acts.gated_map[0, k]), path)
            written.append(path)
    return written
