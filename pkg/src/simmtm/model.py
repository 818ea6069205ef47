"""
Encoders, projector, decoder and task heads.

Point-wise representations Z are [D, L, d_model]; series-wise
representations S are [D, d_model]. Every sample is encoded on its own:
attention and convolutions run along time only, never across the batch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from simmtm.dataset import flatten_channel_values
from simmtm.dataset import unflatten_channel_values
from simmtm.exceptions import ConfigError
from simmtm.exceptions import DimensionError
from simmtm.layers import Conv1d
from simmtm.layers import Linear
from simmtm.layers import Module
from simmtm.layers import TransformerLayer
from simmtm.layers import activation
from simmtm.layers import sinusoidal_positions
from simmtm.losses import AdaptiveWeights
from simmtm.tensor import Tensor

ENCODER_KINDS = ("transformer", "conv_resnet")


@dataclass(frozen=True)
class ModelConfig:
    """
    Encoder shape and sizes.

    Forecasting defaults: e_layers=2, d_model=16, one input channel (channels
    are flattened before encoding). Classification typically uses
    conv_resnet, e_layers=3, d_model=128 and the data's channel count.
    """

    encoder_kind: str = "transformer"
    e_layers: int = 2
    d_model: int = 16
    n_heads: int = 4
    d_ff: int = 0
    kernel_size: int = 8
    input_length: int = 64
    in_channels: int = 1
    activation: str = "gelu"

    def __post_init__(self) -> None:
        if self.encoder_kind not in ENCODER_KINDS:
            raise ConfigError(f"model.encoder_kind must be one of {ENCODER_KINDS}, got '{self.encoder_kind}'")
        for name in ("e_layers", "d_model", "n_heads", "kernel_size", "input_length", "in_channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be positive, got {getattr(self, name)}")
        if self.d_ff < 0:
            raise ConfigError(f"model.d_ff must be non-negative, got {self.d_ff}")
        if self.encoder_kind == "transformer" and self.d_model % self.n_heads:
            raise ConfigError(f"model.d_model {self.d_model} is not divisible by model.n_heads {self.n_heads}")
        activation(self.activation)

    @property
    def ff_dim(self) -> int:
        """Feed-forward width; 0 in the config means 4 * d_model."""
        return self.d_ff or 4 * self.d_model


class Encoder(Module):
    """Common surface of both encoder kinds."""

    def __init__(self, cfg: ModelConfig) -> None:
        self.cfg = cfg

    def _check_input(self, x: Tensor) -> None:
        expected = (self.cfg.input_length, self.cfg.in_channels)
        if x.ndim != 3 or x.shape[1:] != expected:
            raise DimensionError(f"encoder expects [D, {expected[0]}, {expected[1]}], got {list(x.shape)}")

    def layer_outputs(self, x: Tensor) -> list[Tensor]:
        """Point-wise representation after each of the e_layers layers."""
        raise NotImplementedError()

    def forward(self, x: Tensor) -> Tensor:
        return self.layer_outputs(x)[-1]


class TransformerEncoder(Encoder):
    """Linear embedding, fixed sinusoidal positions, post-norm layers."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__(cfg)
        self.positions = sinusoidal_positions(cfg.input_length, cfg.d_model)
        self.embed = Linear(cfg.in_channels, cfg.d_model, rng)
        self.layers = [
            TransformerLayer(cfg.d_model, cfg.n_heads, cfg.ff_dim, cfg.activation, rng)
            for _ in range(cfg.e_layers)
        ]

    def layer_outputs(self, x: Tensor) -> list[Tensor]:
        self._check_input(x)
        hidden = self.embed(x) + self.positions
        outputs = []
        for layer in self.layers:
            hidden = layer(hidden)
            outputs.append(hidden)
        return outputs


class ResidualBlock(Module):
    def __init__(self, width: int, kernel_size: int, act: str, rng: np.random.Generator) -> None:
        self.act = act
        self.first = Conv1d(width, width, kernel_size, rng)
        self.second = Conv1d(width, width, kernel_size, rng)

    def forward(self, x: Tensor) -> Tensor:
        act = activation(self.act)
        return act(x + self.second(act(self.first(x))))


class ConvResNetEncoder(Encoder):
    """Convolutional stem to d_model channels followed by residual blocks."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__(cfg)
        self.stem = Conv1d(cfg.in_channels, cfg.d_model, cfg.kernel_size, rng)
        self.blocks = [
            ResidualBlock(cfg.d_model, cfg.kernel_size, cfg.activation, rng)
            for _ in range(cfg.e_layers)
        ]

    def layer_outputs(self, x: Tensor) -> list[Tensor]:
        self._check_input(x)
        hidden = activation(self.cfg.activation)(self.stem(x))
        outputs = []
        for block in self.blocks:
            hidden = block(hidden)
            outputs.append(hidden)
        return outputs


def build_encoder(cfg: ModelConfig, rng: np.random.Generator) -> Encoder:
    if cfg.encoder_kind == "conv_resnet":
        return ConvResNetEncoder(cfg, rng)
    return TransformerEncoder(cfg, rng)


class Projector(Module):
    """Linear map along time (L -> 1), shared by all features, then activation."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        self.act = cfg.activation
        self.temporal = Linear(cfg.input_length, 1, rng)

    def forward(self, z: Tensor) -> Tensor:
        rows, _, d_model = z.shape
        series = self.temporal(z.swapaxes(1, 2)).reshape(rows, d_model)
        return activation(self.act)(series)


class Decoder(Module):
    """Linear map d_model -> channels at every time point."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        self.channel = Linear(cfg.d_model, cfg.in_channels, rng)

    def forward(self, z_hat: Tensor) -> Tensor:
        return self.channel(z_hat)


class ForecastHead(Module):
    """Flattened [L * d_model] per channel stream -> horizon."""

    def __init__(self, cfg: ModelConfig, horizon: int, rng: np.random.Generator) -> None:
        if horizon < 1:
            raise ConfigError(f"forecast horizon must be positive, got {horizon}")
        self.horizon = horizon
        self.linear = Linear(cfg.input_length * cfg.d_model, horizon, rng)

    def forward(self, z: Tensor) -> Tensor:
        rows, length, d_model = z.shape
        return self.linear(z.reshape(rows, length * d_model))


class ClassifyHead(Module):
    """Mean over time, then d_model -> class logits."""

    def __init__(self, cfg: ModelConfig, classes: int, rng: np.random.Generator) -> None:
        if classes < 2:
            raise ConfigError(f"classification needs at least 2 classes, got {classes}")
        self.classes = classes
        self.linear = Linear(cfg.d_model, classes, rng)

    def forward(self, z: Tensor) -> Tensor:
        return self.linear(z.mean(axis=1))


class SimMTMModel(Module):
    """Everything pre-training optimizes: encoder, projector, decoder, loss weights."""

    logger = logging.getLogger(__name__)

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        self.cfg = cfg
        self.encoder = build_encoder(cfg, rng)
        self.projector = Projector(cfg, rng)
        self.decoder = Decoder(cfg, rng)
        self.weights = AdaptiveWeights()
        self.logger.debug("built %s model with %d parameters", cfg.encoder_kind, self.num_parameters())

    def encode(self, inputs: Tensor) -> Tensor:
        return self.encoder(inputs)

    def project(self, z: Tensor) -> Tensor:
        return self.projector(z)

    def decode(self, z_hat: Tensor) -> Tensor:
        return self.decoder(z_hat)


class DirectModel(Module):
    """Baseline that decodes the encoding of a single masked series directly."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        self.cfg = cfg
        self.encoder = build_encoder(cfg, rng)
        self.decoder = Decoder(cfg, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.decoder(self.encoder(x))


class ForecastModel(Module):
    """Encoder plus forecast head; channels are handled independently."""

    def __init__(
        self,
        cfg: ModelConfig,
        horizon: int,
        model_rng: np.random.Generator,
        head_rng: np.random.Generator,
    ) -> None:
        if cfg.in_channels != 1:
            raise ConfigError("forecasting encodes flattened channels, model.in_channels must be 1")
        self.cfg = cfg
        self.horizon = horizon
        self.encoder = build_encoder(cfg, model_rng)
        self.head = ForecastHead(cfg, horizon, head_rng)

    def forward(self, x: Tensor) -> Tensor:
        """[N, L, C] -> [N, O, C]."""
        channels = x.shape[2]
        streams = self.head(self.encoder(flatten_channel_values(x)))
        return unflatten_channel_values(streams, channels)


class ClassifyModel(Module):
    def __init__(
        self,
        cfg: ModelConfig,
        classes: int,
        model_rng: np.random.Generator,
        head_rng: np.random.Generator,
    ) -> None:
        self.cfg = cfg
        self.classes = classes
        self.encoder = build_encoder(cfg, model_rng)
        self.head = ClassifyHead(cfg, classes, head_rng)

    def forward(self, x: Tensor) -> Tensor:
        """[N, L, C] -> logits [N, K]."""
        return self.head(self.encoder(x))
