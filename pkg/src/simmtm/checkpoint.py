"""
Checkpoint persistence.

Layout: UTF-8 header lines, then the raw payload.

    simmtm-checkpoint
    version=1
    kind=simmtm
    meta.<key>=<value>          (seed, subcommand, horizon, classes, ...)
    model.<field>=<value>       (ModelConfig echo)
    config.<key>=<value>        (effective run configuration echo)
    tensor=<name>|<d0,d1,...>|<offset>|<nbytes>
    payload_bytes=<n>
    payload_sha256=<hex>
    end

The payload is every tensor in header order as little-endian float64,
row-major. Nothing in the file depends on the clock, so saving the same
state twice gives the same bytes.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from dataclasses import field
from dataclasses import fields
from pathlib import Path

import numpy as np

from simmtm.exceptions import CheckpointError
from simmtm.exceptions import ConfigError
from simmtm.exceptions import IntegrityError
from simmtm.exceptions import ShapeMismatchError
from simmtm.exceptions import VersionMismatchError
from simmtm.layers import Module
from simmtm.model import ClassifyModel
from simmtm.model import DirectModel
from simmtm.model import ForecastModel
from simmtm.model import ModelConfig
from simmtm.model import SimMTMModel
from simmtm.tensor import Array

MAGIC = "simmtm-checkpoint"
FORMAT_VERSION = 1
KINDS = ("simmtm", "direct", "forecast", "classify")

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Checkpoint:
    """Named parameter arrays of one model plus the configuration that built it."""

    kind: str
    model: ModelConfig
    tensors: dict[str, Array]
    metadata: dict[str, str] = field(default_factory=dict)
    config: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise CheckpointError(f"unknown checkpoint kind '{self.kind}'")

    @property
    def seed(self) -> int:
        return int(self.metadata.get("seed", "0"))

    def encoder_state(self) -> dict[str, Array]:
        prefix = "encoder."
        return {name[len(prefix) :]: values for name, values in self.tensors.items() if name.startswith(prefix)}

    def restore(self, module: Module) -> None:
        module.load_state_dict(self.tensors)


def capture(
    module: Module,
    kind: str,
    model_cfg: ModelConfig,
    metadata: dict[str, str] | None = None,
    config: dict[str, str] | None = None,
) -> Checkpoint:
    return Checkpoint(
        kind=kind,
        model=model_cfg,
        tensors=module.state_dict(),
        metadata=dict(metadata or {}),
        config=dict(config or {}),
    )


def build_module(checkpoint: Checkpoint) -> Module:
    """Fresh module of the checkpoint's kind; parameters hold throwaway values."""
    rng = np.random.default_rng(0)
    cfg = checkpoint.model
    if checkpoint.kind == "simmtm":
        return SimMTMModel(cfg, rng)
    if checkpoint.kind == "direct":
        return DirectModel(cfg, rng)
    if checkpoint.kind == "forecast":
        return ForecastModel(cfg, int(checkpoint.metadata["horizon"]), rng, rng)
    return ClassifyModel(cfg, int(checkpoint.metadata["classes"]), rng, rng)


def _model_lines(cfg: ModelConfig) -> list[str]:
    return [f"model.{f.name}={getattr(cfg, f.name)}" for f in fields(cfg)]


def _parse_model(values: dict[str, str]) -> ModelConfig:
    defaults = ModelConfig()
    parsed: dict[str, object] = {}
    for f in fields(ModelConfig):
        if f.name not in values:
            raise IntegrityError(f"checkpoint header lacks model.{f.name}")
        kind = type(getattr(defaults, f.name))
        try:
            parsed[f.name] = kind(values[f.name])
        except ValueError as err:
            raise IntegrityError(f"bad model.{f.name} '{values[f.name]}'") from err
    try:
        return ModelConfig(**parsed)  # type: ignore[arg-type]
    except ConfigError as err:
        raise IntegrityError(f"checkpoint model config is invalid: {err}") from err


def serialize(checkpoint: Checkpoint) -> bytes:
    blocks: list[bytes] = []
    tensor_lines: list[str] = []
    offset = 0
    for name, values in checkpoint.tensors.items():
        block = np.ascontiguousarray(values, dtype="<f8").tobytes()
        shape = ",".join(str(d) for d in np.shape(values))
        tensor_lines.append(f"tensor={name}|{shape}|{offset}|{len(block)}")
        blocks.append(block)
        offset += len(block)
    payload = b"".join(blocks)

    lines = [MAGIC, f"version={FORMAT_VERSION}", f"kind={checkpoint.kind}"]
    lines.extend(f"meta.{key}={value}" for key, value in sorted(checkpoint.metadata.items()))
    lines.extend(_model_lines(checkpoint.model))
    lines.extend(f"config.{key}={value}" for key, value in sorted(checkpoint.config.items()))
    lines.extend(tensor_lines)
    lines.append(f"payload_bytes={len(payload)}")
    lines.append(f"payload_sha256={hashlib.sha256(payload).hexdigest()}")
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("utf-8") + payload


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = serialize(checkpoint)
    path.write_bytes(data)
    logger.info(
        "saved %s checkpoint '%s' (%d tensors, %d bytes)", checkpoint.kind, path, len(checkpoint.tensors), len(data)
    )


def _split_header(data: bytes) -> tuple[list[str], bytes]:
    marker = b"\nend\n"
    cut = data.find(marker)
    if cut < 0:
        raise IntegrityError("checkpoint header is truncated")
    try:
        header = data[:cut].decode("utf-8").split("\n")
    except UnicodeDecodeError as err:
        raise IntegrityError("checkpoint header is not UTF-8") from err
    return header, data[cut + len(marker) :]


def _parse_tensor_line(value: str) -> tuple[str, tuple[int, ...], int, int]:
    """`name|d0,d1,...|offset|nbytes`"""
    try:
        name, shape, offset, nbytes = value.split("|")
        dims = tuple(int(d) for d in shape.split(",")) if shape else ()
        entry = (name, dims, int(offset), int(nbytes))
    except ValueError as err:
        raise IntegrityError(f"malformed tensor entry '{value}'") from err
    if not name or min((*dims, entry[2], entry[3])) < 0:
        raise IntegrityError(f"malformed tensor entry '{value}'")
    return entry


def _payload_size(entries: dict[str, str]) -> int:
    try:
        return int(entries["payload_bytes"])
    except (KeyError, ValueError) as err:
        raise IntegrityError(f"bad payload_bytes '{entries.get('payload_bytes')}'") from err


def deserialize(data: bytes) -> Checkpoint:
    """
    Parse and fully validate checkpoint bytes; nothing is returned on failure.

    Raises:
        simmtm.exceptions.IntegrityError: Bad magic, truncated or corrupt.
        simmtm.exceptions.VersionMismatchError: Unsupported format version.
        simmtm.exceptions.ShapeMismatchError: A stored tensor does not fit
            the model the header describes.
    """
    header, payload = _split_header(data)
    if not header or header[0] != MAGIC:
        raise IntegrityError("not a simmtm checkpoint")

    entries: dict[str, str] = {}
    meta: dict[str, str] = {}
    model: dict[str, str] = {}
    config: dict[str, str] = {}
    directory: list[tuple[str, tuple[int, ...], int, int]] = []
    for line in header[1:]:
        key, sep, value = line.partition("=")
        if not sep:
            raise IntegrityError(f"malformed checkpoint header line '{line}'")
        if key == "tensor":
            directory.append(_parse_tensor_line(value))
        elif key.startswith("meta."):
            meta[key[5:]] = value
        elif key.startswith("model."):
            model[key[6:]] = value
        elif key.startswith("config."):
            config[key[7:]] = value
        else:
            entries[key] = value

    if entries.get("version") != str(FORMAT_VERSION):
        raise VersionMismatchError(f"checkpoint version {entries.get('version')}, expected {FORMAT_VERSION}")
    if len(payload) != _payload_size(entries):
        raise IntegrityError(f"payload holds {len(payload)} bytes, header promises {entries.get('payload_bytes')}")
    if hashlib.sha256(payload).hexdigest() != entries.get("payload_sha256"):
        raise IntegrityError("payload checksum mismatch")

    tensors: dict[str, Array] = {}
    for name, dims, offset, nbytes in directory:
        count = int(np.prod(dims)) if dims else 1
        if nbytes != 8 * count or offset + nbytes > len(payload):
            raise IntegrityError(f"tensor '{name}' block does not fit the payload")
        block = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        tensors[name] = block.astype(np.float64).reshape(dims)

    checkpoint = Checkpoint(
        kind=entries.get("kind", ""),
        model=_parse_model(model),
        tensors=tensors,
        metadata=meta,
        config=config,
    )
    _check_shapes(checkpoint)
    return checkpoint


def _check_shapes(checkpoint: Checkpoint) -> None:
    expected = dict(build_module(checkpoint).named_parameters())
    for name, values in checkpoint.tensors.items():
        if name not in expected:
            raise CheckpointError(f"checkpoint holds unknown tensor '{name}'")
        if values.shape != expected[name].shape:
            raise ShapeMismatchError(
                f"tensor '{name}' stored with shape {values.shape}, config expects {expected[name].shape}",
                tensor=name,
            )
    missing = sorted(set(expected) - set(checkpoint.tensors))
    if missing:
        raise CheckpointError(f"checkpoint lacks tensors {missing}")


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    checkpoint = deserialize(path.read_bytes())
    logger.info("loaded %s checkpoint '%s'", checkpoint.kind, path)
    return checkpoint
