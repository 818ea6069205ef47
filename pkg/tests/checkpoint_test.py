"""Unit tests for checkpoint persistence"""

from __future__ import annotations

import re
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from simmtm.checkpoint import MAGIC
from simmtm.checkpoint import Checkpoint
from simmtm.checkpoint import build_module
from simmtm.checkpoint import capture
from simmtm.checkpoint import deserialize
from simmtm.checkpoint import load_checkpoint
from simmtm.checkpoint import save_checkpoint
from simmtm.checkpoint import serialize
from simmtm.exceptions import CheckpointError
from simmtm.exceptions import IntegrityError
from simmtm.exceptions import ShapeMismatchError
from simmtm.exceptions import VersionMismatchError
from simmtm.model import ClassifyModel
from simmtm.model import ForecastModel
from simmtm.model import ModelConfig
from simmtm.model import SimMTMModel


@pytest.fixture
def checkpoint(tiny_model_cfg: ModelConfig) -> Checkpoint:
    model = SimMTMModel(tiny_model_cfg, np.random.default_rng(8))
    return capture(model, "simmtm", tiny_model_cfg, {"seed": "8"}, {"mask.ratio": "0.5"})


def test_round_trip_is_exact(checkpoint: Checkpoint, tmp_path: Path) -> None:
    path = tmp_path / "nested" / "model.ckpt"
    save_checkpoint(checkpoint, path)
    loaded = load_checkpoint(path)

    assert loaded.kind == "simmtm"
    assert loaded.model == checkpoint.model
    assert loaded.metadata == {"seed": "8"}
    assert loaded.config == {"mask.ratio": "0.5"}
    assert loaded.seed == 8
    assert list(loaded.tensors) == list(checkpoint.tensors)
    for name, values in checkpoint.tensors.items():
        assert np.array_equal(loaded.tensors[name], values)


def test_serialize_is_deterministic(checkpoint: Checkpoint) -> None:
    assert serialize(checkpoint) == serialize(checkpoint)
    assert serialize(checkpoint).startswith(MAGIC.encode() + b"\nversion=1\n")


def test_restore_reproduces_outputs(checkpoint: Checkpoint, tiny_model_cfg: ModelConfig) -> None:
    module = build_module(deserialize(serialize(checkpoint)))
    checkpoint.restore(module)
    original = SimMTMModel(tiny_model_cfg, np.random.default_rng(8))
    for (name, a), (_, b) in zip(original.named_parameters(), module.named_parameters()):
        assert np.array_equal(a.values, b.values), name


def test_encoder_state_strips_prefix(checkpoint: Checkpoint) -> None:
    state = checkpoint.encoder_state()
    assert state
    assert all(not name.startswith("encoder.") for name in state)
    assert "embed.weight" in state
    assert "projector.temporal.weight" not in state


def test_truncated_payload(checkpoint: Checkpoint, tmp_path: Path) -> None:
    path = tmp_path / "cut.ckpt"
    path.write_bytes(serialize(checkpoint)[:-5])
    with pytest.raises(IntegrityError):
        load_checkpoint(path)


def test_truncated_header(checkpoint: Checkpoint) -> None:
    data = serialize(checkpoint)
    with pytest.raises(IntegrityError):
        deserialize(data[: data.find(b"payload_bytes")])


def test_flipped_payload_byte(checkpoint: Checkpoint) -> None:
    data = bytearray(serialize(checkpoint))
    data[-1] ^= 0xFF
    with pytest.raises(IntegrityError, match="checksum"):
        deserialize(bytes(data))


def test_not_a_checkpoint() -> None:
    with pytest.raises(IntegrityError):
        deserialize(b"something else\nend\n")


def test_version_checked_before_checksum(checkpoint: Checkpoint) -> None:
    data = bytearray(serialize(checkpoint).replace(b"\nversion=1\n", b"\nversion=2\n", 1))
    data[-1] ^= 0xFF
    with pytest.raises(VersionMismatchError):
        deserialize(bytes(data))


def test_edited_d_model_names_first_tensor(checkpoint: Checkpoint) -> None:
    data = serialize(checkpoint).replace(b"\nmodel.d_model=8\n", b"\nmodel.d_model=16\n", 1)
    with pytest.raises(ShapeMismatchError) as err:
        deserialize(data)
    assert err.value.tensor == "encoder.embed.weight"


@pytest.mark.parametrize(
    ("pattern", "replacement"),
    [
        (rb"(\ntensor=[^|\n]*)\|", rb"\1||"),
        (rb"(\ntensor=[^|\n]*\|[^|\n]*)\|\d+", rb"\1|x"),
        (rb"(\ntensor=[^|\n]*)\|\d+", rb"\1|-4"),
        (rb"\npayload_bytes=\d+", rb"\npayload_bytes=many"),
        (rb"\npayload_bytes=\d+", b""),
    ],
)
def test_malformed_header_entries(checkpoint: Checkpoint, pattern: bytes, replacement: bytes) -> None:
    data = re.sub(pattern, replacement, serialize(checkpoint), count=1)
    assert data != serialize(checkpoint)
    with pytest.raises(IntegrityError):
        deserialize(data)


def test_invalid_model_header(checkpoint: Checkpoint) -> None:
    data = serialize(checkpoint).replace(b"\nmodel.n_heads=2\n", b"\nmodel.n_heads=3\n", 1)
    with pytest.raises(IntegrityError):
        deserialize(data)


def test_unknown_kind() -> None:
    with pytest.raises(CheckpointError):
        Checkpoint(kind="autoencoder", model=ModelConfig(), tensors={})


def test_build_module_for_heads(tiny_model_cfg: ModelConfig) -> None:
    forecast = Checkpoint(kind="forecast", model=tiny_model_cfg, tensors={}, metadata={"horizon": "4"})
    assert isinstance(build_module(forecast), ForecastModel)
    cfg = replace(tiny_model_cfg, in_channels=2)
    classify = Checkpoint(kind="classify", model=cfg, tensors={}, metadata={"classes": "3"})
    module = build_module(classify)
    assert isinstance(module, ClassifyModel)
    assert module.classes == 3


def test_missing_tensor_is_rejected(checkpoint: Checkpoint) -> None:
    tensors = dict(checkpoint.tensors)
    tensors.pop("weights.log_var_con")
    with pytest.raises(CheckpointError):
        deserialize(serialize(replace(checkpoint, tensors=tensors)))


def test_save_logs(checkpoint: Checkpoint, tmp_path: Path, caplog: pytest.LogCaptureFixture) -> None:
    caplog.set_level("INFO", logger="simmtm.checkpoint")
    save_checkpoint(checkpoint, tmp_path / "a.ckpt")
    assert "saved simmtm checkpoint" in caplog.text
