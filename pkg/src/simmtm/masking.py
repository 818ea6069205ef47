"""
Masked variants of a batch and the layout of the assembled input set.

A masked time point is zeroed in every variate. Random masking hides
exactly round(r * L) points per variant. Geometric masking runs a two-state
process along time whose masked runs have mean `mean_span` and whose
unmasked runs have mean `mean_span * (1 - r) / r`, so the expected masked
fraction is r.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from simmtm.dataset import IntArray
from simmtm.dataset import SeriesBatch
from simmtm.exceptions import ConfigError
from simmtm.exceptions import ContractError
from simmtm.exceptions import DimensionError
from simmtm.tensor import BoolArray
from simmtm.tensor import Tensor
from simmtm.tensor import concat

MASK_KINDS = ("random", "geometric")

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MaskConfig:
    ratio: float = 0.5
    count: int = 3
    kind: str = "geometric"
    mean_span: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.ratio <= 1.0:
            raise ConfigError(f"mask.ratio must lie in [0, 1], got {self.ratio}")
        if self.count < 1:
            raise ConfigError(f"mask.count must be at least 1, got {self.count}")
        if self.kind not in MASK_KINDS:
            raise ConfigError(f"mask.kind must be one of {MASK_KINDS}, got '{self.kind}'")
        if self.mean_span < 1:
            raise ConfigError(f"mask.mean_span must be at least 1, got {self.mean_span}")
        if self.seed < 0:
            raise ConfigError(f"mask seed must be non-negative, got {self.seed}")


@dataclass(frozen=True)
class MaskedSet:
    """masks [N, M, L] (True = masked) and zero-filled variants [N, M, L, C]."""

    masks: BoolArray
    variants: Tensor
    source: SeriesBatch

    @property
    def count(self) -> int:
        return int(self.masks.shape[1])


@dataclass(frozen=True)
class GroupIndex:
    """
    Layout of N * (M + 1) assembled rows: row i * (M + 1) is original i,
    rows i * (M + 1) + 1 ... i * (M + 1) + M are its masked variants.
    """

    samples: int
    variants: int

    @property
    def group_size(self) -> int:
        return self.variants + 1

    @property
    def rows(self) -> int:
        return self.samples * self.group_size

    @property
    def original_rows(self) -> IntArray:
        return np.arange(self.samples) * self.group_size

    def group(self, row: int) -> tuple[int, int]:
        """(sample, variant) of a row; variant 0 is the original."""
        if not 0 <= row < self.rows:
            raise DimensionError(f"row {row} outside 0..{self.rows - 1}")
        return divmod(row, self.group_size)

    def is_original(self, row: int) -> bool:
        return self.group(row)[1] == 0

    def rows_of(self, sample: int) -> range:
        start = sample * self.group_size
        return range(start, start + self.group_size)


def masked_count(ratio: float, length: int) -> int:
    """round(ratio * length), halves rounded up."""
    return int(math.floor(ratio * length + 0.5))


def _zero_fill(b: SeriesBatch, masks: BoolArray) -> MaskedSet:
    x = b.values.values
    variants = np.where(masks[..., None], 0.0, x[:, None, :, :])
    return MaskedSet(masks=masks, variants=Tensor(variants), source=b)


def mask_random(b: SeriesBatch, cfg: MaskConfig) -> MaskedSet:
    """Each variant hides an independent uniform subset of exactly round(r * L) points."""
    if cfg.kind != "random":
        raise ContractError(f"mask_random called with kind '{cfg.kind}'")
    samples, length, _ = b.values.shape
    hidden = masked_count(cfg.ratio, length)

    rng = np.random.default_rng(cfg.seed)
    order = rng.random((samples, cfg.count, length)).argsort(axis=-1)
    masks = np.zeros((samples, cfg.count, length), dtype=bool)
    np.put_along_axis(masks, order[..., :hidden], True, axis=-1)
    return _zero_fill(b, masks)


def geometric_means(ratio: float, mean_span: int) -> tuple[float, float]:
    """
    Mean masked and unmasked run lengths for 0 < ratio < 1.

    A run lasts at least one step, so when the unmasked mean would fall
    below 1 it is clamped to 1 and the masked mean raised to r / (1 - r).
    """
    masked_mean = float(mean_span)
    unmasked_mean = masked_mean * (1.0 - ratio) / ratio
    if unmasked_mean < 1.0:
        unmasked_mean = 1.0
        masked_mean = ratio / (1.0 - ratio)
        logger.warning(
            "mask.ratio %.3f with mean_span %d needs unmasked runs under one step; using masked mean %.3f",
            ratio,
            mean_span,
            masked_mean,
        )
    return masked_mean, unmasked_mean


def mask_geometric(b: SeriesBatch, cfg: MaskConfig) -> MaskedSet:
    """Two-state masked/unmasked process along time, started from its stationary mix."""
    if cfg.kind != "geometric":
        raise ContractError(f"mask_geometric called with kind '{cfg.kind}'")
    samples, length, _ = b.values.shape
    shape = (samples, cfg.count, length)

    if cfg.ratio == 0.0:
        return _zero_fill(b, np.zeros(shape, dtype=bool))
    if cfg.ratio == 1.0:
        return _zero_fill(b, np.ones(shape, dtype=bool))

    masked_mean, unmasked_mean = geometric_means(cfg.ratio, cfg.mean_span)
    leave_masked, leave_unmasked = 1.0 / masked_mean, 1.0 / unmasked_mean

    rng = np.random.default_rng(cfg.seed)
    chains = samples * cfg.count
    state = rng.random(chains) < cfg.ratio
    draws = rng.random((chains, length))
    masks = np.empty((chains, length), dtype=bool)
    masks[:, 0] = state
    for t in range(1, length):
        state = state ^ (draws[:, t] < np.where(state, leave_masked, leave_unmasked))
        masks[:, t] = state

    return _zero_fill(b, masks.reshape(shape))


def apply_masks(b: SeriesBatch, cfg: MaskConfig) -> MaskedSet:
    if cfg.kind == "random":
        return mask_random(b, cfg)
    return mask_geometric(b, cfg)


def assemble_inputs(b: SeriesBatch, m: MaskedSet) -> tuple[Tensor, GroupIndex]:
    """Interleave each original with its M variants into a [N * (M + 1), L, C] set."""
    samples, length, channels = b.values.shape
    if m.variants.shape[0] != samples or m.variants.shape[2:] != (length, channels):
        raise DimensionError(f"masked set {m.variants.shape} does not match batch {b.values.shape}")

    originals = b.values.reshape(samples, 1, length, channels)
    grouped = concat([originals, m.variants], axis=1)
    index = GroupIndex(samples=samples, variants=m.count)
    return grouped.reshape(index.rows, length, channels), index
