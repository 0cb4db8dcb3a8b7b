"""Dataset directory I/O.

Layout (synthetic exports and real corpora are interchangeable):

    <root>/images/<stem>.png          8-bit RGB
    <root>/labels/level1/<stem>.png   8-bit single channel, value = class id
    <root>/labels/level2/<stem>.png
    <root>/labels/level3/<stem>.png
    <root>/labels/level4/<stem>.png   ids 1-based on disk (1..15 by default)
    <root>/meta.json                  per-stem family/seed bookkeeping

Levels 1-3 use 0-based ids on disk; level 4 ships 1-based by default and
the loader remaps file value v to internal id v-1.  Set
``level4_one_based=False`` for corpora that already use 0..14.
"""

from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import LabelError, ShapeMismatchError
from .scenes import N_PHASE_CLASSES, LabeledSample, LabelStack

_LEVEL_CLASS_COUNTS = {1: 2, 2: 3, 3: 4, 4: N_PHASE_CLASSES}


def save_dataset(samples: list[LabeledSample], root, level4_one_based: bool = True) -> None:
    """Export samples to the dataset layout, stems scene_00000, scene_00001, ..."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    for level in range(1, 5):
        (root / "labels" / f"level{level}").mkdir(parents=True, exist_ok=True)
    meta = {}
    for i, sample in enumerate(samples):
        stem = f"scene_{i:05d}"
        rgb = np.clip(np.round(sample.image[0].transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(rgb, mode="RGB").save(root / "images" / f"{stem}.png")
        for level in range(1, 5):
            plane = sample.labels.plane(level)
            if level == 4 and level4_one_based:
                plane = plane + 1
            Image.fromarray(plane.astype(np.uint8), mode="L").save(
                root / "labels" / f"level{level}" / f"{stem}.png"
            )
        meta[stem] = dict(sample.meta)
    with open(root / "meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=1, sort_keys=True)


def _read_plane(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "L":
            im = im.convert("L")
        return np.asarray(im, dtype=np.uint8)


def load_sample(
    image_path,
    label_paths,
    level4_one_based: bool = True,
    strict: bool = False,
    meta: dict | None = None,
) -> LabeledSample:
    """Load one image plus its four label planes (paths ordered level 1..4).

    Hierarchy disagreements between the loaded planes are reported as a
    warning with per-level pixel counts (real annotations contain noise);
    ``strict=True`` turns the report into an error.
    """
    if len(label_paths) != 4:
        raise ValueError(f"expected 4 label paths (levels 1..4), got {len(label_paths)}")
    with Image.open(image_path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    image = np.ascontiguousarray(rgb.transpose(2, 0, 1)[None]).astype(np.float32) / 255.0

    planes = []
    for level, path in zip(range(1, 5), label_paths):
        plane = _read_plane(path)
        if plane.shape != rgb.shape[:2]:
            raise ShapeMismatchError(f"label level {level} for {image_path}", rgb.shape[:2], plane.shape)
        if level == 4 and level4_one_based:
            lo, hi = 1, N_PHASE_CLASSES
        else:
            lo, hi = 0, _LEVEL_CLASS_COUNTS[level] - 1
        bad = (plane < lo) | (plane > hi)
        if bad.any():
            y, x = (int(v) for v in np.argwhere(bad)[0])
            raise LabelError(
                f"unknown class id {int(plane[y, x])} in level-{level} file {path} "
                f"at pixel (y={y}, x={x}); allowed range {lo}..{hi}"
            )
        if level == 4 and level4_one_based:
            plane = (plane - 1).astype(np.uint8)
        planes.append(plane)

    stack = LabelStack(level1=planes[0], level2=planes[1], level3=planes[2], level4=planes[3])
    violations = stack.hierarchy_violations()
    total = sum(violations.values())
    if total:
        report = ", ".join(f"{k}: {v} px" for k, v in violations.items() if v)
        if strict:
            raise LabelError(f"hierarchy-inconsistent labels for {image_path} ({report})")
        warnings.warn(f"hierarchy-inconsistent labels for {image_path} ({report})", stacklevel=2)
    return LabeledSample(image=image, labels=stack, meta=dict(meta or {}))


def load_dataset(root, level4_one_based: bool = True, strict: bool = False) -> list[LabeledSample]:
    """Load every sample under a dataset root, sorted by stem."""
    root = Path(root)
    meta_path = root / "meta.json"
    meta_all: dict = {}
    if meta_path.exists():
        with open(meta_path, encoding="utf-8") as f:
            meta_all = json.load(f)
    samples = []
    for image_path in sorted((root / "images").glob("*.png")):
        stem = image_path.stem
        label_paths = [root / "labels" / f"level{level}" / f"{stem}.png" for level in range(1, 5)]
        samples.append(
            load_sample(
                image_path,
                label_paths,
                level4_one_based=level4_one_based,
                strict=strict,
                meta=meta_all.get(stem, {"family": "unknown"}),
            )
        )
    return samples


def make_splits(samples: list[LabeledSample], train_frac: float, seed: int, heldout_families):
    """Split into (train, test_same, test_different) by family tag.

    Samples from held-out families all go to test_different; the rest are
    shuffled deterministically and divided train_frac / remainder into
    train and test_same.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")
    heldout = set(heldout_families)
    families = {s.family for s in samples}
    if not heldout & families or not families - heldout:
        raise ValueError(
            f"need at least one held-out family and one training family; "
            f"present: {sorted(families)}, held out: {sorted(heldout)}"
        )
    test_different = [s for s in samples if s.family in heldout]
    pool = [s for s in samples if s.family not in heldout]
    order = np.random.default_rng(seed).permutation(len(pool))
    n_train = int(round(train_frac * len(pool)))
    train = [pool[i] for i in order[:n_train]]
    test_same = [pool[i] for i in order[n_train:]]
    return train, test_same, test_different
