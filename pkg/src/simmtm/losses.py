"""
Reconstruction loss, manifold constraint loss and their adaptive combination.

The constraint loss follows the neighborhood assumption: a series and its
masked variants are close, every other series is far. Pairs are built per
row of the assembled set so every row of S contributes to the sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt

from simmtm.exceptions import ConfigError
from simmtm.exceptions import DimensionError
from simmtm.layers import Module
from simmtm.tensor import BoolArray
from simmtm.tensor import Tensor
from simmtm.tensor import exp
from simmtm.tensor import log_softmax
from simmtm.tensor import zeros

if TYPE_CHECKING:
    from simmtm.masking import GroupIndex
    from simmtm.similarity import SimMatrix


@dataclass(frozen=True)
class LossConfig:
    """Which pre-training terms are active (both unless ablating)."""

    use_reconstruction: bool = True
    use_constraint: bool = True

    def __post_init__(self) -> None:
        if not (self.use_reconstruction or self.use_constraint):
            raise ConfigError("at least one of loss.use_reconstruction / loss.use_constraint must be on")


@dataclass(frozen=True)
class LossReport:
    rec: float
    con: float
    weight_rec: float
    weight_con: float
    total: float


@dataclass(frozen=True)
class PairSpec:
    """positives[u, v] is True when row v is a positive of row u."""

    positives: BoolArray

    @property
    def negatives(self) -> BoolArray:
        rows = self.positives.shape[0]
        return ~self.positives & ~np.eye(rows, dtype=bool)

    def positives_of(self, row: int) -> set[int]:
        return {int(v) for v in np.flatnonzero(self.positives[row])}

    def negatives_of(self, row: int) -> set[int]:
        return {int(v) for v in np.flatnonzero(self.negatives[row])}


class AdaptiveWeights(Module):
    """Learnable log-variances (a, b) for the reconstruction and constraint terms."""

    def __init__(self) -> None:
        self.log_var_rec = zeros((), requires_grad=True)
        self.log_var_con = zeros((), requires_grad=True)


def loss_reconstruction(x: Tensor, x_hat: Tensor) -> Tensor:
    """
    Mean squared error per element: squared error averaged over L * C for
    each sample, then averaged over samples.

    Raises:
        simmtm.exceptions.DimensionError: Shapes differ.
    """
    if x.shape != x_hat.shape:
        raise DimensionError(f"reconstruction shapes differ: {x.shape} vs {x_hat.shape}")
    diff = x - x_hat
    return (diff * diff).mean()


def build_pairs(index: GroupIndex) -> PairSpec:
    """
    Rows of the same sample (original plus its M variants) are mutual
    positives, self excluded; every row of another sample is a negative.
    """
    groups = np.repeat(np.arange(index.samples), index.group_size)
    same_group = groups[:, None] == groups[None, :]
    return PairSpec(positives=same_group & ~np.eye(index.rows, dtype=bool))


def loss_constraint(sim: SimMatrix, pairs: PairSpec, temperature: float) -> Tensor:
    """
    Contrastive manifold constraint summed over all rows and their positives.

    The softmax denominator of row s runs over every row except s itself.
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    rows = sim.R.shape[0]
    if pairs.positives.shape != (rows, rows):
        raise DimensionError(f"pair spec {pairs.positives.shape} does not match R {sim.R.shape}")

    log_probs = log_softmax(sim.R / temperature, axis=-1, mask=~np.eye(rows, dtype=bool))
    return -(log_probs * pairs.positives.astype(np.float64)).sum()


def combine_adaptive(
    rec: Tensor,
    con: Tensor,
    weights: AdaptiveWeights,
    cfg: LossConfig | None = None,
) -> tuple[Tensor, LossReport]:
    """
    total = exp(-a) * rec + a + exp(-b) * con + b

    A disabled term contributes neither its weighted loss nor its
    log-variance; its loss and weight are reported as 0.
    """
    cfg = cfg or LossConfig()
    a, b = weights.log_var_rec, weights.log_var_con
    weight_rec, weight_con = exp(-a), exp(-b)

    terms = []
    if cfg.use_reconstruction:
        terms.append(weight_rec * rec + a)
    if cfg.use_constraint:
        terms.append(weight_con * con + b)
    total = terms[0] if len(terms) == 1 else terms[0] + terms[1]

    report = LossReport(
        rec=rec.item() if cfg.use_reconstruction else 0.0,
        con=con.item() if cfg.use_constraint else 0.0,
        weight_rec=weight_rec.item() if cfg.use_reconstruction else 0.0,
        weight_con=weight_con.item() if cfg.use_constraint else 0.0,
        total=total.item(),
    )
    return total, report


def mean_squared_error(prediction: Tensor, target: Tensor) -> Tensor:
    return loss_reconstruction(target, prediction)


def cross_entropy(logits: Tensor, labels: npt.NDArray[np.int_]) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    rows, classes = logits.shape
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (rows,):
        raise DimensionError(f"{rows} rows of logits need {rows} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DimensionError(f"labels must be class indices in [0, {classes}), got {labels.min()}..{labels.max()}")
    picked = np.zeros((rows, classes))
    picked[np.arange(rows), labels] = 1.0
    return -(log_softmax(logits, axis=-1) * picked).sum() / float(rows)
