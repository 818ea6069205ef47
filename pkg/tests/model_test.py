"""Unit tests for encoders, heads and composite models"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from simmtm.exceptions import ConfigError
from simmtm.exceptions import DimensionError
from simmtm.model import ClassifyModel
from simmtm.model import ConvResNetEncoder
from simmtm.model import DirectModel
from simmtm.model import ForecastModel
from simmtm.model import ModelConfig
from simmtm.model import SimMTMModel
from simmtm.model import TransformerEncoder
from simmtm.model import build_encoder
from simmtm.tensor import Tensor


def _inputs(rows: int, length: int, channels: int, seed: int = 0) -> Tensor:
    return Tensor(np.random.default_rng(seed).normal(size=(rows, length, channels)))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"encoder_kind": "rnn"},
        {"e_layers": 0},
        {"d_model": 10, "n_heads": 4},
        {"d_ff": -1},
        {"activation": "sigmoid"},
    ],
)
def test_invalid_model_config(kwargs: dict[str, object]) -> None:
    with pytest.raises(ConfigError):
        ModelConfig(**kwargs)  # type: ignore[arg-type]


def test_conv_encoder_ignores_head_divisibility() -> None:
    cfg = ModelConfig(encoder_kind="conv_resnet", d_model=10, n_heads=4)
    assert isinstance(build_encoder(cfg, np.random.default_rng(0)), ConvResNetEncoder)


def test_ff_dim_default() -> None:
    assert ModelConfig(d_model=8).ff_dim == 32
    assert ModelConfig(d_model=8, d_ff=12).ff_dim == 12


@pytest.mark.parametrize("kind", ["transformer", "conv_resnet"])
def test_encoder_layer_outputs(tiny_model_cfg: ModelConfig, kind: str) -> None:
    cfg = replace(tiny_model_cfg, encoder_kind=kind, e_layers=3, kernel_size=3)
    encoder = build_encoder(cfg, np.random.default_rng(0))
    outputs = encoder.layer_outputs(_inputs(5, 8, 1))
    assert len(outputs) == 3
    assert all(z.shape == (5, 8, 8) for z in outputs)
    np.testing.assert_array_equal(encoder(_inputs(5, 8, 1)).values, outputs[-1].values)


def test_encoder_checks_input_shape(tiny_model_cfg: ModelConfig) -> None:
    encoder = TransformerEncoder(tiny_model_cfg, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        encoder(_inputs(2, 9, 1))
    with pytest.raises(DimensionError):
        encoder(_inputs(2, 8, 2))


def test_encoder_treats_samples_independently(tiny_model_cfg: ModelConfig) -> None:
    encoder = TransformerEncoder(tiny_model_cfg, np.random.default_rng(0))
    x = _inputs(4, 8, 1)
    together = encoder(x).values
    alone = encoder(Tensor(x.values[2:3])).values
    np.testing.assert_allclose(together[2:3], alone, atol=1e-12)


def test_same_seed_same_parameters(tiny_model_cfg: ModelConfig) -> None:
    first = SimMTMModel(tiny_model_cfg, np.random.default_rng(4)).state_dict()
    second = SimMTMModel(tiny_model_cfg, np.random.default_rng(4)).state_dict()
    assert first.keys() == second.keys()
    for name in first:
        np.testing.assert_array_equal(first[name], second[name])


def test_simmtm_model_shapes(tiny_model_cfg: ModelConfig) -> None:
    model = SimMTMModel(tiny_model_cfg, np.random.default_rng(0))
    z = model.encode(_inputs(6, 8, 1))
    s = model.project(z)
    assert z.shape == (6, 8, 8)
    assert s.shape == (6, 8)
    assert model.decode(z).shape == (6, 8, 1)
    names = dict(model.named_parameters())
    assert "weights.log_var_rec" in names
    assert "weights.log_var_con" in names


def test_direct_model_shape(tiny_model_cfg: ModelConfig) -> None:
    model = DirectModel(tiny_model_cfg, np.random.default_rng(0))
    assert model(_inputs(3, 8, 1)).shape == (3, 8, 1)


def test_forecast_model_handles_channels_independently(tiny_model_cfg: ModelConfig) -> None:
    model = ForecastModel(tiny_model_cfg, 4, np.random.default_rng(0), np.random.default_rng(1))
    x = _inputs(2, 8, 3)
    out = model(x).values
    assert out.shape == (2, 4, 3)

    single = model(Tensor(x.values[:, :, 1:2])).values
    np.testing.assert_allclose(out[:, :, 1:2], single, atol=1e-12)


def test_forecast_model_needs_single_input_channel(tiny_model_cfg: ModelConfig) -> None:
    with pytest.raises(ConfigError):
        ForecastModel(replace(tiny_model_cfg, in_channels=2), 4, np.random.default_rng(0), np.random.default_rng(1))


def test_forecast_horizon_must_be_positive(tiny_model_cfg: ModelConfig) -> None:
    with pytest.raises(ConfigError):
        ForecastModel(tiny_model_cfg, 0, np.random.default_rng(0), np.random.default_rng(1))


def test_classify_model_logits(tiny_model_cfg: ModelConfig) -> None:
    cfg = replace(tiny_model_cfg, encoder_kind="conv_resnet", in_channels=2, kernel_size=3)
    model = ClassifyModel(cfg, 3, np.random.default_rng(0), np.random.default_rng(1))
    assert model(_inputs(5, 8, 2)).shape == (5, 3)


def test_classify_needs_two_classes(tiny_model_cfg: ModelConfig) -> None:
    with pytest.raises(ConfigError):
        ClassifyModel(tiny_model_cfg, 1, np.random.default_rng(0), np.random.default_rng(1))


def test_head_seed_does_not_move_encoder(tiny_model_cfg: ModelConfig) -> None:
    a = ForecastModel(tiny_model_cfg, 4, np.random.default_rng(0), np.random.default_rng(1))
    b = ForecastModel(tiny_model_cfg, 4, np.random.default_rng(0), np.random.default_rng(2))
    np.testing.assert_array_equal(a.encoder.embed.weight.values, b.encoder.embed.weight.values)
    assert not np.array_equal(a.head.linear.weight.values, b.head.linear.weight.values)
