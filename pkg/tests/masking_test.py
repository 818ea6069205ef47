"""Unit tests for masked-variant generation"""

from __future__ import annotations

from typing import Any

import numpy as np
import pytest

from simmtm.dataset import SeriesBatch
from simmtm.exceptions import ConfigError
from simmtm.exceptions import ContractError
from simmtm.exceptions import DimensionError
from simmtm.masking import GroupIndex
from simmtm.masking import MaskConfig
from simmtm.masking import apply_masks
from simmtm.masking import assemble_inputs
from simmtm.masking import geometric_means
from simmtm.masking import mask_geometric
from simmtm.masking import mask_random
from simmtm.masking import masked_count
from simmtm.tensor import Tensor


def _batch(samples: int, length: int, channels: int = 1, seed: int = 0) -> SeriesBatch:
    values = np.random.default_rng(seed).normal(size=(samples, length, channels)) + 3.0
    return SeriesBatch(values=Tensor(values), origin=np.arange(samples))


@pytest.mark.parametrize(
    "kwargs",
    [{"ratio": -0.1}, {"ratio": 1.5}, {"count": 0}, {"kind": "block"}, {"mean_span": 0}, {"seed": -1}],
)
def test_invalid_mask_config(kwargs: dict[str, Any]) -> None:
    with pytest.raises(ConfigError):
        MaskConfig(**kwargs)


@pytest.mark.parametrize(("ratio", "length", "expected"), [(0.5, 8, 4), (0.25, 10, 3), (0.125, 4, 1), (0.0, 9, 0)])
def test_masked_count_rounds_half_up(ratio: float, length: int, expected: int) -> None:
    assert masked_count(ratio, length) == expected


def test_random_mask_hides_exact_count() -> None:
    masked = mask_random(_batch(5, 12, 2), MaskConfig(ratio=0.25, count=4, kind="random", seed=1))
    assert masked.masks.shape == (5, 4, 12)
    assert masked.variants.shape == (5, 4, 12, 2)
    np.testing.assert_array_equal(masked.masks.sum(axis=-1), np.full((5, 4), 3))


def test_variants_zero_masked_points_in_every_channel() -> None:
    batch = _batch(3, 10, 3)
    masked = apply_masks(batch, MaskConfig(ratio=0.5, count=2, kind="random", seed=2))
    variants = masked.variants.values
    original = batch.values.values[:, None]
    hidden = masked.masks[..., None].repeat(3, axis=-1)
    assert np.all(variants[hidden] == 0.0)
    np.testing.assert_array_equal(variants[~hidden], np.broadcast_to(original, variants.shape)[~hidden])


def test_masking_leaves_batch_untouched() -> None:
    batch = _batch(2, 6)
    before = batch.values.numpy()
    apply_masks(batch, MaskConfig(ratio=0.5, count=3, kind="geometric"))
    np.testing.assert_array_equal(batch.values.values, before)


@pytest.mark.parametrize("kind", ["random", "geometric"])
def test_same_seed_same_masks(kind: str) -> None:
    cfg = MaskConfig(ratio=0.4, count=3, kind=kind, seed=9)
    first = apply_masks(_batch(4, 16), cfg)
    second = apply_masks(_batch(4, 16), cfg)
    np.testing.assert_array_equal(first.masks, second.masks)
    other = apply_masks(_batch(4, 16), MaskConfig(ratio=0.4, count=3, kind=kind, seed=10))
    assert not np.array_equal(first.masks, other.masks)


@pytest.mark.parametrize("kind", ["random", "geometric"])
def test_ratio_extremes(kind: str) -> None:
    batch = _batch(2, 7)
    none = apply_masks(batch, MaskConfig(ratio=0.0, count=2, kind=kind))
    every = apply_masks(batch, MaskConfig(ratio=1.0, count=2, kind=kind))
    assert not none.masks.any()
    assert every.masks.all()
    assert not every.variants.values.any()


def test_geometric_masked_fraction() -> None:
    masked = mask_geometric(_batch(200, 100), MaskConfig(ratio=0.5, count=5, kind="geometric", mean_span=3, seed=4))
    assert abs(masked.masks.mean() - 0.5) < 0.02


def test_geometric_run_lengths() -> None:
    masked = mask_geometric(_batch(100, 200), MaskConfig(ratio=0.25, count=2, kind="geometric", mean_span=4, seed=5))
    runs: list[int] = []
    for row in masked.masks.reshape(-1, 200):
        # interior runs only; edge runs are cut by the window
        edges = np.flatnonzero(np.diff(row.astype(int)))
        for start, stop in zip(edges[:-1], edges[1:]):
            if row[start + 1]:
                runs.append(int(stop - start))
    assert abs(np.mean(runs) - 4.0) < 0.3
    assert abs(masked.masks.mean() - 0.25) < 0.02


def test_geometric_means_clamp(caplog: Any) -> None:
    assert geometric_means(0.5, 3) == (3.0, 3.0)
    masked_mean, unmasked_mean = geometric_means(0.9, 3)
    assert unmasked_mean == 1.0
    assert masked_mean == pytest.approx(9.0)
    assert "mean_span" in caplog.text


def test_mask_kind_contract() -> None:
    with pytest.raises(ContractError):
        mask_random(_batch(1, 4), MaskConfig(kind="geometric"))
    with pytest.raises(ContractError):
        mask_geometric(_batch(1, 4), MaskConfig(kind="random"))


def test_group_index_layout() -> None:
    index = GroupIndex(samples=3, variants=2)
    assert index.rows == 9
    np.testing.assert_array_equal(index.original_rows, [0, 3, 6])
    assert index.group(4) == (1, 1)
    assert index.is_original(6)
    assert not index.is_original(7)
    assert list(index.rows_of(2)) == [6, 7, 8]
    with pytest.raises(DimensionError):
        index.group(9)


def test_assemble_inputs_interleaves_groups() -> None:
    batch = _batch(2, 5)
    masked = apply_masks(batch, MaskConfig(ratio=0.4, count=3, kind="random", seed=3))
    inputs, index = assemble_inputs(batch, masked)
    assert inputs.shape == (8, 5, 1)
    assert index == GroupIndex(samples=2, variants=3)
    np.testing.assert_array_equal(inputs.values[4], batch.values.values[1])
    np.testing.assert_array_equal(inputs.values[6], masked.variants.values[1, 1])


def test_assemble_inputs_rejects_foreign_masks() -> None:
    masked = apply_masks(_batch(3, 5), MaskConfig(count=1))
    with pytest.raises(DimensionError):
        assemble_inputs(_batch(2, 5), masked)
