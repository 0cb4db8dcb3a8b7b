"""Procedural generator for desk-scale labeled vessel scenes.

Each scene is a semi-transparent glass vessel over a cluttered background,
optionally holding stacked material layers separated by horizontal fill
lines.  Every pixel carries four nested annotation levels:

  level 1: 0 background, 1 vessel
  level 2: 0 background, 1 empty vessel, 2 filled
  level 3: 0 background, 1 empty, 2 liquid, 3 solid
  level 4: 15-way exact physical phase (ids below)

The generator emits only the level-4 plane; coarser levels are always
derived through the fixed projection tables, so hierarchy consistency is
structural.  Rendering alpha-blends the background through the glass,
which is what makes the scenes interesting: a background stripe crossing
behind an empty vessel is visually indistinguishable, inside the vessel,
from a material layer seen through the same glass.  Only the stripe's
continuation outside the vessel resolves the ambiguity.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import LabelError

# level-4 class ids (internal, 0-based)
BACKGROUND = 0
EMPTY_VESSEL = 1
LIQUID = 2
LIQUID_TWO = 3
SUSPENSION = 4
EMULSION = 5
FOAM = 6
SOLID = 7
GEL = 8
POWDER = 9
GRANULAR = 10
BULK = 11
SOLID_LIQUID_MIX = 12
SOLID_TWO = 13
VAPOR = 14

N_PHASE_CLASSES = 15

PHASE_NAMES = (
    "Background",
    "Empty vessel",
    "Liquid",
    "Liquid phase two",
    "Suspension",
    "Emulsion",
    "Foam",
    "Solid",
    "Gel",
    "Powder",
    "Granular",
    "Bulk",
    "Solid liquid mixture",
    "Solid phase two",
    "Vapor",
)

# fixed projections between annotation levels
LEVEL4_TO_LEVEL3 = np.array([0, 1, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 3, 3], dtype=np.uint8)
LEVEL3_TO_LEVEL2 = np.array([0, 1, 2, 2], dtype=np.uint8)
LEVEL2_TO_LEVEL1 = np.array([0, 1, 1], dtype=np.uint8)

# base RGB tint per phase id; families permute channels, scenes jitter
_PHASE_TINTS = np.array(
    [
        [0.00, 0.00, 0.00],  # background (unused)
        [0.00, 0.00, 0.00],  # empty vessel (glass, unused)
        [0.20, 0.40, 0.85],  # liquid
        [0.20, 0.72, 0.38],  # liquid phase two
        [0.72, 0.58, 0.32],  # suspension
        [0.85, 0.80, 0.70],  # emulsion
        [0.92, 0.88, 0.55],  # foam
        [0.48, 0.50, 0.62],  # solid
        [0.58, 0.80, 0.74],  # gel
        [0.80, 0.68, 0.48],  # powder
        [0.58, 0.44, 0.28],  # granular
        [0.44, 0.40, 0.46],  # bulk
        [0.55, 0.65, 0.50],  # solid-liquid mixture
        [0.64, 0.54, 0.66],  # solid phase two
        [0.84, 0.85, 0.90],  # vapor
    ]
)

_GAS_LIKE = frozenset({VAPOR})


def project_labels(level4: np.ndarray):
    """Derive (level3, level2, level1) from a level-4 plane.

    Fixed surjections: phases 2-6 are liquid-like, 7-14 solid-like;
    anything non-background inside the vessel is vessel at level 1.
    """
    level4 = np.asarray(level4)
    bad = (level4 < 0) | (level4 >= N_PHASE_CLASSES)
    if bad.any():
        y, x = (int(v) for v in np.argwhere(bad)[0])
        raise LabelError(f"level-4 value {int(level4[y, x])} out of range 0..14 at pixel (y={y}, x={x})")
    level4 = level4.astype(np.uint8, copy=False)
    level3 = LEVEL4_TO_LEVEL3[level4]
    level2 = LEVEL3_TO_LEVEL2[level3]
    level1 = LEVEL2_TO_LEVEL1[level2]
    return level3, level2, level1


@dataclass
class LabelStack:
    """The four per-pixel annotation planes of one scene (uint8 [h, w])."""

    level1: np.ndarray
    level2: np.ndarray
    level3: np.ndarray
    level4: np.ndarray

    @classmethod
    def from_level4(cls, level4: np.ndarray) -> "LabelStack":
        level3, level2, level1 = project_labels(level4)
        return cls(level1, level2, level3, level4.astype(np.uint8, copy=False))

    def plane(self, level: int) -> np.ndarray:
        return getattr(self, f"level{level}")

    def hierarchy_violations(self) -> dict[str, int]:
        """Count pixels where a coarse plane disagrees with the projection
        of the finer one (annotation noise in loaded real data)."""
        l3, l2, l1 = project_labels(self.level4)
        return {
            "level3": int((l3 != self.level3).sum()),
            "level2": int((LEVEL3_TO_LEVEL2[self.level3] != self.level2).sum()),
            "level1": int((LEVEL2_TO_LEVEL1[self.level2] != self.level1).sum()),
        }


@dataclass(frozen=True)
class SceneConfig:
    """Knobs for one scene family; a family is one fixed config."""

    size: int = 64
    shape_weights: tuple[float, float, float] = (0.4, 0.4, 0.2)  # beaker, flask, vial
    max_content_layers: int = 2
    phases: tuple[int, ...] = (LIQUID, LIQUID_TWO, FOAM, POWDER, GRANULAR, VAPOR)
    distractor_density: float = 0.5
    ambiguity: bool = False
    noise: float = 0.02
    min_area_frac: float = 0.08
    max_area_frac: float = 0.45
    bg_color: tuple[float, float, float] = (0.55, 0.52, 0.48)
    palette_perm: tuple[int, int, int] = (0, 1, 2)
    family: str = "default"

    def __post_init__(self):
        if not (0.0 < self.min_area_frac < self.max_area_frac < 1.0):
            raise ValueError(
                f"vessel area bounds must satisfy 0 < min < max < 1, got "
                f"[{self.min_area_frac}, {self.max_area_frac}]"
            )
        if not 0 <= self.max_content_layers <= 2:
            raise ValueError(f"max_content_layers must be 0..2, got {self.max_content_layers}")
        if any(p < LIQUID or p >= N_PHASE_CLASSES for p in self.phases):
            raise ValueError(f"phase palette must use content ids 2..14, got {self.phases}")
        if self.size < 16:
            raise ValueError(f"scene size must be >= 16, got {self.size}")

    def digest(self) -> str:
        parts = [f"{f.name}={getattr(self, f.name)!r}" for f in fields(self)]
        return hashlib.sha256(";".join(parts).encode()).hexdigest()[:12]


@dataclass
class LabeledSample:
    """One image [1, 3, h, w] in [0, 1] plus its label stack and meta."""

    image: np.ndarray
    labels: LabelStack
    meta: dict

    @property
    def family(self) -> str:
        return self.meta.get("family", "unknown")

    @property
    def roi(self) -> np.ndarray:
        """The vessel plane as a [1, 1, h, w] float32 mask (the ROI input)."""
        return self.labels.level1[None, None].astype(np.float32)


# -- geometry -----------------------------------------------------------


def _vessel_mask(rng: np.random.Generator, size: int, kind: int) -> np.ndarray:
    """Boolean silhouette for one of the three vessel shapes."""
    ys = np.arange(size)[:, None]
    xs = np.arange(size)[None, :]
    cx = rng.uniform(0.3, 0.7) * size
    bottom = rng.uniform(0.78, 0.95) * size

    if kind == 0:  # beaker: upright rectangle
        half_w = rng.uniform(0.14, 0.26) * size
        height = rng.uniform(0.35, 0.62) * size
        top = bottom - height
        return (np.abs(xs - cx) <= half_w) & (ys >= top) & (ys <= bottom)

    if kind == 1:  # flask: trapezoid body + short neck
        half_bottom = rng.uniform(0.16, 0.27) * size
        half_top = half_bottom * rng.uniform(0.30, 0.50)
        body_h = rng.uniform(0.30, 0.50) * size
        neck_h = rng.uniform(0.08, 0.16) * size
        body_top = bottom - body_h
        t = np.clip((bottom - ys) / max(body_h, 1e-6), 0.0, 1.0)
        half = half_bottom + (half_top - half_bottom) * t
        body = (np.abs(xs - cx) <= half) & (ys >= body_top) & (ys <= bottom)
        neck = (np.abs(xs - cx) <= half_top * 0.8) & (ys >= body_top - neck_h) & (ys < body_top)
        return body | neck

    # vial: narrow tall rectangle
    half_w = rng.uniform(0.055, 0.11) * size
    height = rng.uniform(0.40, 0.66) * size
    top = bottom - height
    return (np.abs(xs - cx) <= half_w) & (ys >= top) & (ys <= bottom)


def _interior(mask: np.ndarray, wall: int = 2) -> np.ndarray:
    """Content region: the silhouette minus glass walls (sides and bottom)."""
    interior = mask.copy()
    shifted = np.zeros_like(mask)
    shifted[:, wall:] = mask[:, :-wall]
    interior &= shifted  # left wall
    shifted[:] = False
    shifted[:, :-wall] = mask[:, wall:]
    interior &= shifted  # right wall
    shifted[:] = False
    shifted[:-wall] = mask[wall:]
    interior &= shifted  # bottom wall
    shifted[:] = False
    shifted[1:] = mask[:-1]
    interior &= shifted  # rim
    return interior


def _phase_tint(rng: np.random.Generator, phase: int, perm: tuple[int, int, int]) -> np.ndarray:
    base = _PHASE_TINTS[phase][list(perm)]
    return np.clip(base + rng.uniform(-0.05, 0.05, 3), 0.0, 1.0)


def generate_scene(seed: int, config: SceneConfig) -> LabeledSample:
    """Render one labeled scene, deterministic in (seed, config)."""
    rng = np.random.default_rng([seed, int(config.digest(), 16)])
    size = config.size

    # vessel geometry within the configured area bounds
    kinds = np.asarray(config.shape_weights, dtype=float)
    kinds = kinds / kinds.sum()
    mask = None
    for _ in range(64):
        kind = int(rng.choice(3, p=kinds))
        candidate = _vessel_mask(rng, size, kind)
        frac = candidate.mean()
        if config.min_area_frac <= frac <= config.max_area_frac:
            mask = candidate
            break
    if mask is None:
        raise RuntimeError(
            f"could not place a vessel inside area bounds "
            f"[{config.min_area_frac}, {config.max_area_frac}] after 64 attempts"
        )
    interior = _interior(mask)
    int_rows = np.where(interior.any(axis=1))[0]
    iy0, iy1 = (int(int_rows[0]), int(int_rows[-1])) if int_rows.size else (0, -1)

    # content stack: bottom-up bands over the interior, gas-like phase topmost
    level4 = np.zeros((size, size), dtype=np.uint8)
    level4[mask] = EMPTY_VESSEL
    n_layers = int(rng.integers(0, config.max_content_layers + 1)) if int_rows.size else 0
    n_layers = min(n_layers, len(config.phases))
    layer_phases: list[int] = []
    if n_layers:
        chosen = list(rng.choice(np.asarray(config.phases), size=n_layers, replace=False))
        chosen.sort(key=lambda p: p in _GAS_LIKE)  # at most one gas layer, forced to the top
        layer_phases = [int(p) for p in chosen]
    content_tops: list[int] = []
    if layer_phases:
        span = iy1 - iy0 + 1
        fill_frac = rng.uniform(0.25, 0.80)
        weights = rng.dirichlet(np.ones(len(layer_phases)) * 2.0)
        heights = np.maximum(1, np.round(weights * fill_frac * span).astype(int))
        y = iy1 + 1
        for phase, band_h in zip(layer_phases, heights):
            y_top = max(iy0, y - int(band_h))
            band = interior & (np.arange(size)[:, None] >= y_top) & (np.arange(size)[:, None] < y)
            level4[band] = phase
            content_tops.append(y_top)
            y = y_top
            if y <= iy0:
                break

    # background: tinted gradient plus thin distractor stripes and blobs
    bg = np.empty((size, size, 3), dtype=np.float64)
    base = np.clip(np.asarray(config.bg_color) + rng.uniform(-0.06, 0.06, 3), 0.0, 1.0)
    grad = np.linspace(-0.08, 0.08, size)[:, None]
    bg[:] = np.clip(base[None, None] + grad[..., None] * rng.uniform(0.3, 1.2), 0.0, 1.0)
    n_stripes = int(np.round(config.distractor_density * rng.uniform(0, 6)))
    for _ in range(n_stripes):
        y0 = int(rng.integers(0, size))
        t = int(rng.integers(1, 4))
        color = 0.5 * base + 0.5 * rng.uniform(0.0, 1.0, 3)
        bg[y0 : y0 + t] = color
    for _ in range(int(np.round(config.distractor_density * rng.uniform(0, 3)))):
        x0 = int(rng.integers(0, size))
        w = int(rng.integers(2, max(3, size // 6)))
        y0 = int(rng.integers(0, size))
        hh = int(rng.integers(2, max(3, size // 6)))
        color = 0.5 * base + 0.5 * rng.uniform(0.0, 1.0, 3)
        bg[y0 : y0 + hh, x0 : x0 + w] = color

    # ambiguity stripe: a wide band behind the vessel, tinted like content.
    # Bottom-anchored variants mimic a fill line exactly (through glass, a
    # band of content color reaching the vessel bottom).  Labels are not
    # affected: the stripe is context, not content.
    stripe_rows: tuple[int, int] | None = None
    if config.ambiguity and int_rows.size:
        stripe_phase = int(rng.choice(np.asarray(config.phases)))
        stripe_color = _phase_tint(rng, stripe_phase, config.palette_perm)
        y0 = int(rng.integers(iy0, max(iy0 + 1, iy1 - 2)))
        if rng.uniform() < 0.5:
            y1 = size  # bottom-anchored: fill-line mimic
        else:
            y1 = min(size, y0 + int(rng.integers(6, max(7, size // 3))))
        bg[y0:y1] = stripe_color
        stripe_rows = (y0, int(y1))

    # compose: content replaces the background behind the glass, then the
    # whole vessel silhouette is alpha-blended glass over what lies behind
    behind = bg.copy()
    for phase in set(layer_phases):
        tint = _phase_tint(rng, phase, config.palette_perm)
        shade = np.clip(1.0 - 0.1 * (np.arange(size) - iy0) / max(size - iy0, 1), 0.7, 1.0)
        plane = np.broadcast_to(tint[None, None, :] * shade[:, None, None], (size, size, 3))
        region = level4 == phase
        behind[region] = plane[region]

    alpha = rng.uniform(0.30, 0.70)
    glass = np.clip(np.asarray([0.72, 0.76, 0.80]) + rng.uniform(-0.08, 0.08, 3), 0.0, 1.0)
    img = behind.copy()
    img[mask] = alpha * glass + (1.0 - alpha) * behind[mask]

    # specular streak down one inner wall
    cols = np.where(mask.any(axis=0))[0]
    if cols.size > 6:
        sx = int(cols[2] if rng.uniform() < 0.5 else cols[-3])
        streak = mask[:, sx]
        img[streak, sx] = 0.55 * img[streak, sx] + 0.45

    img += rng.normal(0.0, config.noise, img.shape)
    img = np.clip(img, 0.0, 1.0)

    meta = {
        "seed": int(seed),
        "config_digest": config.digest(),
        "family": config.family,
        "vessel_area_frac": float(mask.mean()),
    }
    if stripe_rows is not None:
        meta["stripe_rows"] = stripe_rows
    image = np.ascontiguousarray(img.transpose(2, 0, 1)[None]).astype(np.float32)
    return LabeledSample(image=image, labels=LabelStack.from_level4(level4), meta=meta)


def generate_set(configs: list[SceneConfig], count: int, seed0: int) -> list[LabeledSample]:
    """Generate count scenes round-robin over configs, seeds seed0, seed0+1, ..."""
    return [generate_scene(seed0 + i, configs[i % len(configs)]) for i in range(count)]


def standard_families(size: int = 64):
    """The stock desk-scale families: two training families (one with
    ambiguity stripes) and two held-out families with shifted palettes
    and shape mixes for the harder test regime."""
    train = [
        SceneConfig(size=size, family="beaker-ambient", shape_weights=(0.6, 0.35, 0.05), bg_color=(0.58, 0.54, 0.50)),
        SceneConfig(
            size=size,
            family="flask-striped",
            shape_weights=(0.15, 0.55, 0.30),
            bg_color=(0.46, 0.48, 0.55),
            distractor_density=0.7,
            ambiguity=True,
        ),
    ]
    heldout = [
        SceneConfig(
            size=size,
            family="vial-green",
            shape_weights=(0.25, 0.05, 0.70),
            bg_color=(0.42, 0.56, 0.42),
            palette_perm=(1, 2, 0),
        ),
        SceneConfig(
            size=size,
            family="flask-dark",
            shape_weights=(0.2, 0.6, 0.2),
            bg_color=(0.30, 0.30, 0.37),
            palette_perm=(2, 0, 1),
            distractor_density=0.7,
            ambiguity=True,
        ),
    ]
    return train, heldout


def ambiguity_config(size: int = 64) -> SceneConfig:
    """The always-striped config used for the context-ambiguity probe."""
    train, _ = standard_families(size)
    return replace(train[1], family="ambiguity-probe")
