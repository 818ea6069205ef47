"""
Parameterized building blocks on top of `simmtm.tensor`.

A `Module` discovers its parameters from its attributes (tensors that
require gradients, child modules, lists of child modules) in assignment
order, so parameter names and order are a pure function of construction.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from collections.abc import Mapping
from typing import Any

import numpy as np

from simmtm.exceptions import CheckpointError
from simmtm.exceptions import ConfigError
from simmtm.exceptions import DimensionError
from simmtm.exceptions import ShapeMismatchError
from simmtm.tensor import Array
from simmtm.tensor import Tensor
from simmtm.tensor import concat
from simmtm.tensor import gelu
from simmtm.tensor import layer_norm
from simmtm.tensor import relu
from simmtm.tensor import softmax
from simmtm.tensor import zeros

ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "gelu": gelu,
    "relu": relu,
}


def activation(name: str) -> Callable[[Tensor], Tensor]:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ConfigError(f"unknown activation '{name}'") from None


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple[int, ...]) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


class Module:
    """Base class for anything owning trainable tensors."""

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError()

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        """Dotted names and tensors, in attribute assignment order."""
        found: list[tuple[str, Tensor]] = []
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                found.append((f"{prefix}{name}", value))
            elif isinstance(value, Module):
                found.extend(value.named_parameters(f"{prefix}{name}."))
            elif isinstance(value, list):
                for position, item in enumerate(value):
                    if isinstance(item, Module):
                        found.extend(item.named_parameters(f"{prefix}{name}.{position}."))
        return found

    def parameters(self) -> list[Tensor]:
        return [param for _, param in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(param.size for param in self.parameters())

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def state_dict(self) -> dict[str, Array]:
        return {name: param.numpy() for name, param in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, Array], *, strict: bool = True) -> None:
        """
        Copy stored arrays into the parameters, validating every shape first.

        Args:
            state: Name to array mapping.
            strict: Reject names the module does not own, and missing names.

        Raises:
            simmtm.exceptions.ShapeMismatchError: Stored shape differs.
            simmtm.exceptions.CheckpointError: Names missing or unexpected.
        """
        owned = dict(self.named_parameters())
        if strict:
            missing = sorted(set(owned) - set(state))
            unexpected = sorted(set(state) - set(owned))
            if missing or unexpected:
                raise CheckpointError(f"state mismatch: missing={missing} unexpected={unexpected}")

        for name, param in owned.items():
            if name not in state:
                continue
            stored = np.asarray(state[name], dtype=np.float64)
            if stored.shape != param.shape:
                raise ShapeMismatchError(
                    f"tensor '{name}' stored with shape {stored.shape}, model expects {param.shape}",
                    tensor=name,
                )

        for name, param in owned.items():
            if name in state:
                param.values[...] = state[name]


class Linear(Module):
    """x @ weight + bias over the last axis; weight is [in, out]."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator) -> None:
        self.weight = xavier_uniform(rng, in_features, out_features, (in_features, out_features))
        self.bias = zeros((out_features,), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise DimensionError(f"Linear expects last dim {self.weight.shape[0]}, got {x.shape}")
        return x @ self.weight + self.bias


class LayerNorm(Module):
    def __init__(self, features: int) -> None:
        self.gamma = Tensor(np.ones(features), requires_grad=True)
        self.beta = zeros((features,), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)


class MultiHeadSelfAttention(Module):
    """Scaled dot-product attention over the time axis, per sample."""

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator) -> None:
        if d_model % n_heads:
            raise ConfigError(f"d_model {d_model} is not divisible by n_heads {n_heads}")
        self.n_heads = n_heads
        self.query = Linear(d_model, d_model, rng)
        self.key = Linear(d_model, d_model, rng)
        self.value = Linear(d_model, d_model, rng)
        self.out = Linear(d_model, d_model, rng)

    def _split(self, x: Tensor) -> Tensor:
        batch, length, d_model = x.shape
        heads = x.reshape(batch, length, self.n_heads, d_model // self.n_heads)
        return heads.transpose(0, 2, 1, 3)

    def forward(self, x: Tensor) -> Tensor:
        batch, length, d_model = x.shape
        q = self._split(self.query(x))
        k = self._split(self.key(x))
        v = self._split(self.value(x))

        scores = q @ k.swapaxes(-1, -2) / math.sqrt(d_model // self.n_heads)
        context = softmax(scores, axis=-1) @ v
        merged = context.transpose(0, 2, 1, 3).reshape(batch, length, d_model)
        return self.out(merged)


class FeedForward(Module):
    def __init__(self, d_model: int, d_ff: int, act: str, rng: np.random.Generator) -> None:
        self.act = act
        self.expand = Linear(d_model, d_ff, rng)
        self.contract = Linear(d_ff, d_model, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.contract(activation(self.act)(self.expand(x)))


class TransformerLayer(Module):
    """Post-norm encoder layer: attention and feed-forward, each residual."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, act: str, rng: np.random.Generator) -> None:
        self.attention = MultiHeadSelfAttention(d_model, n_heads, rng)
        self.norm_attention = LayerNorm(d_model)
        self.feed_forward = FeedForward(d_model, d_ff, act, rng)
        self.norm_feed_forward = LayerNorm(d_model)

    def forward(self, x: Tensor) -> Tensor:
        x = self.norm_attention(x + self.attention(x))
        return self.norm_feed_forward(x + self.feed_forward(x))


class Conv1d(Module):
    """
    Length-preserving 1-D convolution over the time axis of [B, L, C] input.

    Zero padding puts (k - 1) // 2 steps on the left and the rest on the
    right. Columns are gathered with an integer index so the product is a
    single matmul.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator) -> None:
        if kernel_size < 1:
            raise ConfigError(f"kernel_size must be positive, got {kernel_size}")
        self.kernel_size = kernel_size
        self.weight = xavier_uniform(
            rng,
            in_channels * kernel_size,
            out_channels * kernel_size,
            (kernel_size * in_channels, out_channels),
        )
        self.bias = zeros((out_channels,), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        batch, length, channels = x.shape
        if channels * self.kernel_size != self.weight.shape[0]:
            raise DimensionError(f"Conv1d expects {self.weight.shape[0] // self.kernel_size} channels, got {x.shape}")

        left = (self.kernel_size - 1) // 2
        right = self.kernel_size - 1 - left
        parts = []
        if left:
            parts.append(zeros((batch, left, channels)))
        parts.append(x)
        if right:
            parts.append(zeros((batch, right, channels)))
        padded = concat(parts, axis=1) if len(parts) > 1 else x

        index = np.arange(length)[:, None] + np.arange(self.kernel_size)[None, :]
        columns = padded[:, index, :].reshape(batch, length, self.kernel_size * channels)
        return columns @ self.weight + self.bias


def sinusoidal_positions(length: int, d_model: int) -> Array:
    """Fixed [length, d_model] table: sin on even features, cos on odd ones."""
    position = np.arange(length, dtype=np.float64)[:, None]
    rates = np.exp(-math.log(10000.0) * np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    table = np.zeros((length, d_model))
    table[:, 0::2] = np.sin(position * rates)
    table[:, 1::2] = np.cos(position * rates[: d_model // 2])
    return table
