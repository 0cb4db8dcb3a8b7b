"""Run configuration: UTF-8 `key = value` text, strictly validated.

Unknown keys are rejected so a typo cannot silently fall back to a
default.  Every command that writes artifacts also writes its resolved
configuration next to them (config.resolved.txt) for reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .model import STRATEGIES


def _opt_str(text: str):
    return text or None


def _opt_int(text: str):
    return int(text) if text else None


def _int_tuple(text: str):
    return tuple(int(v) for v in text.replace(",", " ").split()) if text.strip() else ()


_PARSERS = {
    "dataset": _opt_str,
    "scenes": int,
    "scene_size": int,
    "train_frac": float,
    "strategy": str,
    "head_mode": str,
    "head_level": _opt_int,
    "first_layer_filters": int,
    "encoder_widths": _int_tuple,
    "steps": int,
    "batch": int,
    "lr": float,
    "seeds": _int_tuple,
    "out": str,
}


@dataclass(frozen=True)
class RunConfig:
    # data: either a dataset directory or synthetic-generation parameters
    dataset: str | None = None
    scenes: int = 300
    scene_size: int = 64
    train_frac: float = 0.8
    # model
    strategy: str = "valve"
    head_mode: str = "multi"
    head_level: int | None = None
    first_layer_filters: int = 16
    encoder_widths: tuple = (24, 32, 32)
    # training
    steps: int = 1000
    batch: int = 8
    lr: float = 1e-3
    seeds: tuple = (0,)
    # output directory
    out: str = "runs/out"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.head_mode not in ("multi", "single"):
            raise ConfigError(f"head_mode must be 'multi' or 'single', got {self.head_mode!r}")
        if self.head_mode == "single" and self.head_level not in (1, 2, 3, 4):
            raise ConfigError("head_mode 'single' requires head_level in 1..4")
        if not 0.0 < self.train_frac < 1.0:
            raise ConfigError(f"train_frac must be in (0, 1), got {self.train_frac}")
        for name in ("scenes", "scene_size", "first_layer_filters", "steps", "batch"):
            if getattr(self, name) <= 0 and not (name == "steps" and self.steps == 0):
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _PARSERS:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
            try:
                values[key] = _PARSERS[key](value)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        return cls.from_text(text)

    def with_overrides(self, **overrides) -> "RunConfig":
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **overrides)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                rendered = ""
            elif isinstance(value, tuple):
                rendered = ",".join(str(v) for v in value)
            else:
                rendered = str(value)
            lines.append(f"{f.name} = {rendered}")
        return "\n".join(lines) + "\n"

    def write_resolved(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "config.resolved.txt"
        path.write_text(self.to_text(), encoding="utf-8")
        return path
