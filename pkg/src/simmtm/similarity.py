"""
Series-wise similarity and similarity-weighted point-wise aggregation.

Each original's point-wise representation is rebuilt as a softmax(R / tau)
weighted sum over candidate rows, never itself. PNSA candidates are all
other rows (its masked variants and every row of the other samples); PSA
candidates are only its own masked variants.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from simmtm.dataset import SeriesBatch
from simmtm.exceptions import ConfigError
from simmtm.exceptions import ContractError
from simmtm.exceptions import DimensionError
from simmtm.masking import GroupIndex
from simmtm.masking import MaskedSet
from simmtm.masking import assemble_inputs
from simmtm.tensor import BoolArray
from simmtm.tensor import Tensor
from simmtm.tensor import clip_min
from simmtm.tensor import softmax
from simmtm.tensor import sqrt

if TYPE_CHECKING:
    from simmtm.model import SimMTMModel

CANDIDATE_SETS = ("PNSA", "PSA")
COSINE_EPS = 1e-8

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AggregationConfig:
    candidate_set: str = "PNSA"
    temperature: float = 0.02

    def __post_init__(self) -> None:
        if self.candidate_set not in CANDIDATE_SETS:
            raise ConfigError(f"aggregation.candidate_set must be one of {CANDIDATE_SETS}, got '{self.candidate_set}'")
        if not self.temperature > 0:
            raise ConfigError(f"aggregation.temperature must be positive, got {self.temperature}")


@dataclass(frozen=True)
class SimMatrix:
    """Pairwise cosine similarities R [D, D] and the softmax temperature."""

    R: Tensor
    temperature: float


@dataclass(frozen=True)
class RepBundle:
    """Point-wise Z [D, L, d_model] and series-wise S [D, d_model]."""

    pointwise: Tensor
    serieswise: Tensor

    def __post_init__(self) -> None:
        if self.pointwise.shape[0] != self.serieswise.shape[0]:
            raise DimensionError(f"Z has {self.pointwise.shape[0]} rows, S has {self.serieswise.shape[0]}")


@dataclass(frozen=True)
class Reconstruction:
    x_hat: Tensor
    sim: SimMatrix
    bundle: RepBundle
    index: GroupIndex
    weights: Tensor


def cosine_matrix(S: Tensor, temperature: float = 0.02) -> SimMatrix:
    """
    R[u, v] = <u, v> / (max(|u|, eps) * max(|v|, eps)); zero rows give 0.

    Raises:
        simmtm.exceptions.ContractError: Fewer than two rows.
    """
    if S.ndim != 2 or S.shape[0] < 2:
        raise ContractError(f"cosine_matrix needs [D >= 2, d] input, got {list(S.shape)}")
    norms = clip_min(sqrt((S * S).sum(axis=1, keepdims=True)), COSINE_EPS)
    unit = S / norms
    return SimMatrix(R=unit @ unit.transpose(), temperature=temperature)


def candidate_mask(index: GroupIndex, candidate_set: str) -> BoolArray:
    """[N, D] boolean: True where row d may contribute to original n."""
    mask = np.zeros((index.samples, index.rows), dtype=bool)
    for sample, row in enumerate(index.original_rows):
        if candidate_set == "PSA":
            mask[sample, row + 1 : row + index.group_size] = True
        else:
            mask[sample] = True
            mask[sample, row] = False
    return mask


def aggregation_weights(sim: SimMatrix, index: GroupIndex, cfg: AggregationConfig) -> Tensor:
    """softmax over candidates of R[original, candidate] / tau, shape [N, D]."""
    if sim.R.shape != (index.rows, index.rows):
        raise DimensionError(f"R {sim.R.shape} does not match {index.rows} assembled rows")
    logits = sim.R[index.original_rows] / cfg.temperature
    return softmax(logits, axis=-1, mask=candidate_mask(index, cfg.candidate_set))


def _weighted_sum(weights: Tensor, Z: Tensor, index: GroupIndex) -> Tensor:
    rows, length, d_model = Z.shape
    return (weights @ Z.reshape(rows, length * d_model)).reshape(index.samples, length, d_model)


def aggregate_with_similarity(Z: Tensor, sim: SimMatrix, index: GroupIndex, cfg: AggregationConfig) -> Tensor:
    """Weighted sum of candidate point-wise rows, [N, L, d_model]."""
    return _weighted_sum(aggregation_weights(sim, index, cfg), Z, index)


def aggregate(Z: Tensor, S: Tensor, index: GroupIndex, cfg: AggregationConfig) -> Tensor:
    return aggregate_with_similarity(Z, cosine_matrix(S, cfg.temperature), index, cfg)


def reconstruct(
    batch: SeriesBatch,
    masked: MaskedSet,
    model: SimMTMModel,
    cfg: AggregationConfig,
) -> Reconstruction:
    """assemble -> encode -> project -> cosine -> aggregate -> decode."""
    if masked.count < 1:
        raise ConfigError("reconstruction needs at least one masked variant per sample")
    inputs, index = assemble_inputs(batch, masked)
    z = model.encode(inputs)
    s = model.project(z)
    sim = cosine_matrix(s, cfg.temperature)
    weights = aggregation_weights(sim, index, cfg)
    x_hat = model.decode(_weighted_sum(weights, z, index))
    logger.debug("reconstructed %d originals from %d rows", index.samples, index.rows)
    return Reconstruction(
        x_hat=x_hat,
        sim=sim,
        bundle=RepBundle(pointwise=z, serieswise=s),
        index=index,
        weights=weights,
    )
