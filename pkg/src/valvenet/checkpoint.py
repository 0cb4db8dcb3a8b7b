"""Versioned binary checkpoint format.

Layout: bytes 0-3 magic "VLVF"; bytes 4-7 format version (uint32 LE, =1);
bytes 8-11 header length L (uint32 LE); L bytes of UTF-8 key=value lines
describing the ModelSpec; then one raw block of little-endian float32 per
parameter, in declared architecture order, lengths implied by the spec.
Round-trips are bit-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import Model, ModelSpec

MAGIC = b"VLVF"
VERSION = 1

_HEADER_KEYS = (
    "strategy",
    "head_mode",
    "head_level",
    "first_layer_filters",
    "encoder_widths",
    "input_channels",
    "class_counts",
)


def _spec_to_header(spec: ModelSpec) -> bytes:
    lines = [
        f"strategy={spec.strategy}",
        f"head_mode={spec.head_mode}",
        f"head_level={'' if spec.head_level is None else spec.head_level}",
        f"first_layer_filters={spec.first_layer_filters}",
        "encoder_widths=" + ",".join(str(v) for v in spec.encoder_widths),
        f"input_channels={spec.input_channels}",
        "class_counts=" + ",".join(str(v) for v in spec.class_counts),
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")


def _spec_from_header(raw: bytes) -> ModelSpec:
    fields: dict[str, str] = {}
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise CheckpointError(f"header is not valid UTF-8: {e}") from e
    for line in text.splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep or key not in _HEADER_KEYS:
            raise CheckpointError(f"unknown header line {line!r}")
        fields[key] = value
    missing = [k for k in _HEADER_KEYS if k not in fields]
    if missing:
        raise CheckpointError(f"header missing keys: {missing}")
    try:
        return ModelSpec(
            strategy=fields["strategy"],
            head_mode=fields["head_mode"],
            head_level=int(fields["head_level"]) if fields["head_level"] else None,
            first_layer_filters=int(fields["first_layer_filters"]),
            encoder_widths=tuple(int(v) for v in fields["encoder_widths"].split(",")),
            input_channels=int(fields["input_channels"]),
            class_counts=tuple(int(v) for v in fields["class_counts"].split(",")),
        )
    except (ValueError, TypeError) as e:
        raise CheckpointError(f"invalid header field: {e}") from e


def save_checkpoint(model: Model, path: str | Path) -> None:
    """Write the model spec and parameters; bit-exact on reload."""
    if model.dtype != np.float32:
        raise CheckpointError(f"only float32 models are serialized, model is {model.dtype}")
    header = _spec_to_header(model.spec)
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint32(VERSION).tobytes())
        f.write(np.uint32(len(header)).tobytes())
        f.write(header)
        for pair in model.params.values():
            f.write(np.ascontiguousarray(pair.value, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> Model:
    """Rebuild a model from a checkpoint; header is validated before any
    parameter block is read."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version = int(np.frombuffer(blob[4:8], dtype="<u4")[0])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version} (expected {VERSION})")
    header_len = int(np.frombuffer(blob[8:12], dtype="<u4")[0])
    if len(blob) < 12 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    spec = _spec_from_header(blob[12 : 12 + header_len])

    model = Model(spec, seed=0)
    offset = 12 + header_len
    for name, pair in model.params.items():
        nbytes = pair.value.size * 4
        block = blob[offset : offset + nbytes]
        if len(block) != nbytes:
            raise CheckpointError(
                f"{path}: corrupt block '{name}': expected {nbytes} bytes, file has {len(block)}"
            )
        pair.value[...] = np.frombuffer(block, dtype="<f4").reshape(pair.value.shape)
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes after final block")
    return model
