"""
Representation analysis and the reconstruction showcase.

CKA features of a layer are the per-sample point-wise representations
flattened over time, [n, L * d_model]. CKA is linear CKA on column-centered
features.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
import pandas as pd

from simmtm.checkpoint import Checkpoint
from simmtm.checkpoint import build_module
from simmtm.dataset import SeriesBatch
from simmtm.dataset import flatten_channels
from simmtm.exceptions import ConfigError
from simmtm.exceptions import ContractError
from simmtm.exceptions import DegenerateInputError
from simmtm.exceptions import DimensionError
from simmtm.masking import MaskConfig
from simmtm.masking import apply_masks
from simmtm.metrics import MetricsReport
from simmtm.model import DirectModel
from simmtm.model import Encoder
from simmtm.model import ModelConfig
from simmtm.model import SimMTMModel
from simmtm.similarity import AggregationConfig
from simmtm.similarity import reconstruct
from simmtm.tensor import Array
from simmtm.tensor import Tensor
from simmtm.tensor import no_grad

DEMO_COLUMNS = (
    "series",
    "t",
    "original",
    "masked",
    "is_masked",
    "simmtm",
    "direct",
    "simmtm_mse",
    "direct_mse",
)

logger = logging.getLogger(__name__)


def _as_array(x: Tensor | Array) -> Array:
    return x.values if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def cka(X: Tensor | Array, Y: Tensor | Array) -> float:
    """
    Linear CKA between two representations of the same n samples.

    Raises:
        simmtm.exceptions.ContractError: Fewer than two samples.
        simmtm.exceptions.DimensionError: Row counts differ.
        simmtm.exceptions.DegenerateInputError: All rows of an input are equal.
    """
    x, y = _as_array(X), _as_array(Y)
    if x.ndim != 2 or y.ndim != 2:
        raise DimensionError(f"cka needs 2-D inputs, got {x.shape} and {y.shape}")
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"cka needs the same samples, got {x.shape[0]} and {y.shape[0]} rows")
    if x.shape[0] < 2:
        raise ContractError("cka needs at least two samples")

    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    if not xc.any() or not yc.any():
        raise DegenerateInputError("cka input has zero variance: every row is identical")

    cross = np.linalg.norm(yc.T @ xc, ord="fro") ** 2
    norm_x = np.linalg.norm(xc.T @ xc, ord="fro")
    norm_y = np.linalg.norm(yc.T @ yc, ord="fro")
    return float(cross / (norm_x * norm_y))


@dataclass(frozen=True)
class CkaReport:
    value: float
    first_layer: str
    last_layer: str
    samples: int

    def render(self) -> str:
        return (
            f"cka({self.first_layer}, {self.last_layer}) over {self.samples} samples: "
            f"{100.0 * self.value:.2f}%"
        )


@dataclass(frozen=True)
class GapReport:
    pretrained: CkaReport
    finetuned: CkaReport

    @property
    def gap(self) -> float:
        return abs(self.pretrained.value - self.finetuned.value)

    def render(self) -> str:
        return "\n".join(
            [
                f"pretrained {self.pretrained.render()}",
                f"finetuned {self.finetuned.render()}",
                f"|delta cka|: {100.0 * self.gap:.2f}%",
            ]
        ) + "\n"


def encoder_inputs(batch: SeriesBatch, cfg: ModelConfig) -> Tensor:
    """Batch values shaped for an encoder built from cfg."""
    channels = batch.values.shape[2]
    if channels != cfg.in_channels and cfg.in_channels == 1:
        return flatten_channels(batch).values
    return batch.values


def layer_features(encoder: Encoder, batch: SeriesBatch) -> list[Array]:
    """Per-layer CKA features [n, L * d_model]."""
    with no_grad():
        outputs = encoder.layer_outputs(encoder_inputs(batch, encoder.cfg))
    return [z.values.reshape(z.shape[0], -1) for z in outputs]


def cka_first_last(model: Any, batch: SeriesBatch) -> CkaReport:
    """CKA between the first and the last encoder layer of any model with an `encoder`."""
    features = layer_features(model.encoder, batch)
    return CkaReport(
        value=cka(features[0], features[-1]),
        first_layer="layer.0",
        last_layer=f"layer.{len(features) - 1}",
        samples=int(features[0].shape[0]),
    )


def _restored(checkpoint: Checkpoint) -> Any:
    module = build_module(checkpoint)
    checkpoint.restore(module)
    return module


def representation_gap(pretrained: Checkpoint, finetuned: Checkpoint, batch: SeriesBatch) -> GapReport:
    """
    |CKA(first, last)| difference between two models on identical batches.

    Raises:
        simmtm.exceptions.ConfigError: The checkpoints differ in ModelConfig.
    """
    if pretrained.model != finetuned.model:
        raise ConfigError(f"checkpoints disagree on model config: {pretrained.model} vs {finetuned.model}")
    report = GapReport(
        pretrained=cka_first_last(_restored(pretrained), batch),
        finetuned=cka_first_last(_restored(finetuned), batch),
    )
    logger.info("representation gap %.2f%%", 100.0 * report.gap)
    return report


def reconstruction_demo(
    batch: SeriesBatch,
    simmtm: Checkpoint,
    direct: Checkpoint,
    mask_cfg: MaskConfig,
    agg_cfg: AggregationConfig | None = None,
) -> pd.DataFrame:
    """
    Aligned original, masked, SimMTM and direct reconstructions, one row per
    (series, t). The masked column is the first masked variant, which is
    also what the direct baseline reconstructs.
    """
    if simmtm.kind != "simmtm" or direct.kind != "direct":
        raise ConfigError(
            f"reconstruction demo needs simmtm and direct checkpoints, got {simmtm.kind} and {direct.kind}"
        )
    if simmtm.model != direct.model:
        raise ConfigError("simmtm and direct checkpoints must share the encoder/decoder config")

    agg_cfg = agg_cfg or AggregationConfig()
    cfg = simmtm.model
    if batch.values.shape[2] != cfg.in_channels and cfg.in_channels == 1:
        batch = flatten_channels(batch)
    simmtm_model: SimMTMModel = _restored(simmtm)
    direct_model: DirectModel = _restored(direct)

    masked = apply_masks(batch, mask_cfg)
    samples, length, _ = batch.values.shape
    first = masked.variants.values[:, 0]
    with no_grad():
        rebuilt = reconstruct(batch, masked, simmtm_model, agg_cfg).x_hat.values
        direct_hat = direct_model(Tensor(first)).values

    original = batch.values.values
    simmtm_mse = ((rebuilt - original) ** 2).mean(axis=(1, 2))
    direct_mse = ((direct_hat - original) ** 2).mean(axis=(1, 2))

    # channel 0 only for multi-channel models
    frame = pd.DataFrame(
        {
            "series": np.repeat(np.arange(samples), length),
            "t": np.tile(np.arange(length), samples),
            "original": original[:, :, 0].reshape(-1),
            "masked": first[:, :, 0].reshape(-1),
            "is_masked": masked.masks[:, 0].reshape(-1).astype(int),
            "simmtm": rebuilt[:, :, 0].reshape(-1),
            "direct": direct_hat[:, :, 0].reshape(-1),
            "simmtm_mse": np.repeat(simmtm_mse, length),
            "direct_mse": np.repeat(direct_mse, length),
        },
        columns=list(DEMO_COLUMNS),
    )
    logger.info(
        "reconstruction demo over %d series: simmtm mse %.6f, direct mse %.6f",
        samples,
        simmtm_mse.mean(),
        direct_mse.mean(),
    )
    return frame


def demo_summary(frame: pd.DataFrame) -> MetricsReport:
    per_series = frame.groupby("series")[["simmtm_mse", "direct_mse"]].first()
    return MetricsReport(
        task="reconstruct",
        split="test",
        samples=int(len(per_series)),
        metrics={
            "simmtm_mse": float(per_series["simmtm_mse"].mean()),
            "direct_mse": float(per_series["direct_mse"].mean()),
        },
    )
