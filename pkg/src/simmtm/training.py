"""
Pre-training and fine-tuning loops.

Runs are fixed-epoch with no early stopping. Every random draw comes from
the seed streams of `TrainConfig.seed`: model init, head init, batch order
and per-batch mask seeds, so a loss logged at epoch e is a pure function
of (seed, configs, data).
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from collections.abc import Iterator
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace

import numpy as np

from simmtm.checkpoint import Checkpoint
from simmtm.checkpoint import capture
from simmtm.dataset import ClassifyData
from simmtm.dataset import ForecastData
from simmtm.dataset import IntArray
from simmtm.dataset import SeriesBatch
from simmtm.dataset import flatten_channels
from simmtm.exceptions import ConfigError
from simmtm.exceptions import DimensionError
from simmtm.exceptions import DivergenceError
from simmtm.exceptions import NonFiniteError
from simmtm.losses import LossConfig
from simmtm.losses import LossReport
from simmtm.losses import build_pairs
from simmtm.losses import combine_adaptive
from simmtm.losses import cross_entropy
from simmtm.losses import loss_constraint
from simmtm.losses import loss_reconstruction
from simmtm.losses import mean_squared_error
from simmtm.masking import MaskConfig
from simmtm.masking import apply_masks
from simmtm.metrics import MetricsReport
from simmtm.metrics import classification_metrics
from simmtm.metrics import forecast_metrics
from simmtm.model import ClassifyModel
from simmtm.model import DirectModel
from simmtm.model import ForecastModel
from simmtm.model import ModelConfig
from simmtm.model import SimMTMModel
from simmtm.optim import Adam
from simmtm.seeding import derive_seed
from simmtm.seeding import seed_streams
from simmtm.similarity import AggregationConfig
from simmtm.similarity import reconstruct
from simmtm.tensor import Array
from simmtm.tensor import Tensor
from simmtm.tensor import no_grad
from simmtm.tensor import zeros

PHASES = ("pretrain", "finetune_forecast", "finetune_classify")
EPOCH_LOG_HEADER = "epoch,loss_rec,loss_con,weight_rec,weight_con,total"
LOSS_LOG_HEADER = "epoch,loss"

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimization settings of one phase.

    `horizon` is required by finetune_forecast and `classes` by
    finetune_classify; the other phases ignore them. `train_proportion`
    keeps a seeded random share of the fine-tuning train split.
    """

    phase: str = "pretrain"
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    horizon: int = 0
    classes: int = 0
    train_proportion: float = 1.0

    def __post_init__(self) -> None:
        if self.phase not in PHASES:
            raise ConfigError(f"phase must be one of {PHASES}, got '{self.phase}'")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if not 0.0 < self.train_proportion <= 1.0:
            raise ConfigError(f"train_proportion must lie in (0, 1], got {self.train_proportion}")
        if self.phase == "finetune_forecast" and self.horizon < 1:
            raise ConfigError("finetune_forecast needs a positive horizon")
        if self.phase == "finetune_classify" and self.classes < 2:
            raise ConfigError("finetune_classify needs at least 2 classes")


@dataclass(frozen=True)
class EpochLog:
    """Batch means of one pre-training epoch."""

    epoch: int
    rec: float
    con: float
    weight_rec: float
    weight_con: float
    total: float

    def render(self) -> str:
        values = (self.rec, self.con, self.weight_rec, self.weight_con, self.total)
        return f"{self.epoch}," + ",".join(f"{v:.17g}" for v in values)


def render_epoch_log(logs: list[EpochLog]) -> str:
    return "\n".join([EPOCH_LOG_HEADER, *(log.render() for log in logs)]) + "\n"


def render_loss_log(losses: list[float]) -> str:
    lines = [LOSS_LOG_HEADER, *(f"{epoch},{loss:.17g}" for epoch, loss in enumerate(losses, start=1))]
    return "\n".join(lines) + "\n"


@dataclass
class PretrainResult:
    model: SimMTMModel | DirectModel
    checkpoint: Checkpoint
    log: list[EpochLog] = field(default_factory=list)


@dataclass
class FinetuneResult:
    model: ForecastModel | ClassifyModel
    report: MetricsReport
    losses: list[float] = field(default_factory=list)


def iterate_batches(count: int, batch_size: int, rng: np.random.Generator | None = None) -> Iterator[IntArray]:
    """Index chunks of size batch_size (the last may be short); shuffled when rng is given."""
    order = np.arange(count) if rng is None else rng.permutation(count)
    for start in range(0, count, batch_size):
        yield order[start : start + batch_size]


def training_subset(count: int, train_cfg: TrainConfig) -> IntArray:
    """
    Sorted indices of a seeded random share of `count` train samples.

    Keeps round(count * train_proportion) samples, at least one; the full
    range when the proportion is 1.
    """
    if train_cfg.train_proportion >= 1.0:
        return np.arange(count)
    keep = max(1, int(round(count * train_cfg.train_proportion)))
    rng = seed_streams(train_cfg.seed).rng("subset")
    return np.sort(rng.choice(count, size=keep, replace=False))


def _epoch_mean(epoch: int, reports: list[LossReport]) -> EpochLog:
    return EpochLog(
        epoch=epoch,
        rec=float(np.mean([r.rec for r in reports])),
        con=float(np.mean([r.con for r in reports])),
        weight_rec=float(np.mean([r.weight_rec for r in reports])),
        weight_con=float(np.mean([r.weight_con for r in reports])),
        total=float(np.mean([r.total for r in reports])),
    )


def _channel_independent(data: SeriesBatch, model_cfg: ModelConfig) -> SeriesBatch:
    channels = data.values.shape[2]
    if channels == model_cfg.in_channels:
        return data
    if model_cfg.in_channels == 1:
        return flatten_channels(data)
    raise DimensionError(f"data has {channels} channels, model.in_channels is {model_cfg.in_channels}")


def _metadata(train_cfg: TrainConfig, **extra: object) -> dict[str, str]:
    meta = {
        "phase": train_cfg.phase,
        "seed": str(train_cfg.seed),
        "epochs": str(train_cfg.epochs),
        "batch_size": str(train_cfg.batch_size),
        "learning_rate": repr(train_cfg.learning_rate),
        "train_proportion": repr(train_cfg.train_proportion),
    }
    meta.update({key: str(value) for key, value in extra.items()})
    return meta


def pretrain(
    data: SeriesBatch,
    mask_cfg: MaskConfig,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    agg_cfg: AggregationConfig | None = None,
    loss_cfg: LossConfig | None = None,
    config: dict[str, str] | None = None,
) -> PretrainResult:
    """
    Per batch: mask, reconstruct, both losses, adaptive combination, one Adam step.

    Raises:
        simmtm.exceptions.DivergenceError: A loss term or gradient became
            non-finite; carries the epoch, batch and term.
    """
    agg_cfg = agg_cfg or AggregationConfig()
    loss_cfg = loss_cfg or LossConfig()
    data = _channel_independent(data, model_cfg)
    streams = seed_streams(train_cfg.seed)
    model = SimMTMModel(model_cfg, streams.rng("model"))
    optimizer = Adam(model.parameters(), train_cfg.learning_rate)
    shuffle = streams.rng("shuffle")
    logger.info("pretraining on %d series for %d epochs", data.size, train_cfg.epochs)

    log: list[EpochLog] = []
    for epoch in range(1, train_cfg.epochs + 1):
        reports: list[LossReport] = []
        for number, index in enumerate(iterate_batches(data.size, train_cfg.batch_size, shuffle)):
            batch = data.take(index)
            masked = apply_masks(batch, replace(mask_cfg, seed=derive_seed(streams.mask, epoch, number)))
            optimizer.zero_grad()
            term = "reconstruction"
            try:
                rebuilt = reconstruct(batch, masked, model, agg_cfg)
                rec = loss_reconstruction(batch.values, rebuilt.x_hat) if loss_cfg.use_reconstruction else zeros(())
                term = "constraint"
                con = (
                    loss_constraint(rebuilt.sim, build_pairs(rebuilt.index), agg_cfg.temperature)
                    if loss_cfg.use_constraint
                    else zeros(())
                )
                term = "total"
                total, report = combine_adaptive(rec, con, model.weights, loss_cfg)
                term = "gradient"
                total.backward()
            except NonFiniteError as err:
                logger.error("divergence at epoch %d batch %d in %s: %s", epoch, number, term, err)
                raise DivergenceError(
                    f"non-finite {term} at epoch {epoch}, batch {number}: {err}",
                    epoch=epoch,
                    batch=number,
                    term=term,
                ) from err
            optimizer.step()
            reports.append(report)
            logger.debug("epoch %d batch %d total %.6f", epoch, number, report.total)

        log.append(_epoch_mean(epoch, reports))
        logger.info("epoch %d/%d total %.6f", epoch, train_cfg.epochs, log[-1].total)

    checkpoint = capture(model, "simmtm", model_cfg, _metadata(train_cfg), config)
    return PretrainResult(model=model, checkpoint=checkpoint, log=log)


def pretrain_direct(
    data: SeriesBatch,
    mask_cfg: MaskConfig,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    config: dict[str, str] | None = None,
) -> PretrainResult:
    """
    Baseline without aggregation or constraint: one masked variant per
    series, encode it, decode it, MSE against the original.
    """
    mask_cfg = replace(mask_cfg, count=1)
    data = _channel_independent(data, model_cfg)
    streams = seed_streams(train_cfg.seed)
    model = DirectModel(model_cfg, streams.rng("model"))
    optimizer = Adam(model.parameters(), train_cfg.learning_rate)
    shuffle = streams.rng("shuffle")

    log: list[EpochLog] = []
    for epoch in range(1, train_cfg.epochs + 1):
        reports: list[LossReport] = []
        for number, index in enumerate(iterate_batches(data.size, train_cfg.batch_size, shuffle)):
            batch = data.take(index)
            masked = apply_masks(batch, replace(mask_cfg, seed=derive_seed(streams.mask, epoch, number)))
            optimizer.zero_grad()
            try:
                loss = loss_reconstruction(batch.values, model(_single_variant(masked.variants)))
                loss.backward()
            except NonFiniteError as err:
                raise DivergenceError(
                    f"non-finite reconstruction at epoch {epoch}, batch {number}: {err}",
                    epoch=epoch,
                    batch=number,
                    term="reconstruction",
                ) from err
            optimizer.step()
            value = loss.item()
            reports.append(LossReport(rec=value, con=0.0, weight_rec=1.0, weight_con=0.0, total=value))

        log.append(_epoch_mean(epoch, reports))
        logger.info("direct baseline epoch %d/%d loss %.6f", epoch, train_cfg.epochs, log[-1].total)

    checkpoint = capture(model, "direct", model_cfg, _metadata(train_cfg), config)
    return PretrainResult(model=model, checkpoint=checkpoint, log=log)


def _single_variant(variants: Tensor) -> Tensor:
    samples, _, length, channels = variants.shape
    return variants.reshape(samples, length, channels)


def _transfer_encoder(checkpoint: Checkpoint | None, model: ForecastModel | ClassifyModel) -> None:
    if checkpoint is None:
        logger.info("fine-tuning from random initialization")
        return
    if checkpoint.model != model.cfg:
        raise ConfigError(f"checkpoint model config {checkpoint.model} differs from {model.cfg}")
    model.encoder.load_state_dict(checkpoint.encoder_state())
    logger.info("encoder initialized from %s checkpoint", checkpoint.kind)


def _fit(
    model: ForecastModel | ClassifyModel,
    inputs: SeriesBatch,
    loss_fn: Callable[[Tensor, IntArray], Tensor],
    train_cfg: TrainConfig,
) -> list[float]:
    streams = seed_streams(train_cfg.seed)
    optimizer = Adam(model.parameters(), train_cfg.learning_rate)
    shuffle = streams.rng("shuffle")
    losses: list[float] = []
    for epoch in range(1, train_cfg.epochs + 1):
        batch_losses: list[float] = []
        for number, index in enumerate(iterate_batches(inputs.size, train_cfg.batch_size, shuffle)):
            optimizer.zero_grad()
            try:
                loss = loss_fn(model(inputs.take(index).values), index)
                loss.backward()
            except NonFiniteError as err:
                raise DivergenceError(
                    f"non-finite {train_cfg.phase} loss at epoch {epoch}, batch {number}: {err}",
                    epoch=epoch,
                    batch=number,
                    term=train_cfg.phase,
                ) from err
            optimizer.step()
            batch_losses.append(loss.item())
        losses.append(float(np.mean(batch_losses)))
        logger.info("%s epoch %d/%d loss %.6f", train_cfg.phase, epoch, train_cfg.epochs, losses[-1])
    return losses


def finetune_forecast(
    checkpoint: Checkpoint | None,
    data: ForecastData,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
) -> FinetuneResult:
    """
    Fresh forecast head on the (optionally pre-trained) encoder, trained with
    MSE; reports MSE/MAE on the test split in standardized space.
    """
    train_inputs, train_targets = data.train
    if train_targets.shape[1] != train_cfg.horizon:
        raise ConfigError(f"data windows have horizon {train_targets.shape[1]}, train config says {train_cfg.horizon}")
    keep = training_subset(train_inputs.size, train_cfg)
    train_inputs, train_targets = train_inputs.take(keep), Tensor(train_targets.values[keep])
    logger.info("fine-tuning on %d of %d train windows", len(keep), data.train[0].size)

    streams = seed_streams(train_cfg.seed)
    model = ForecastModel(model_cfg, train_cfg.horizon, streams.rng("model"), streams.rng("head"))
    _transfer_encoder(checkpoint, model)

    def loss_fn(prediction: Tensor, index: IntArray) -> Tensor:
        return mean_squared_error(prediction, Tensor(train_targets.values[index]))

    losses = _fit(model, train_inputs, loss_fn, train_cfg)
    report = evaluate_forecast(model, data.test, split="test", batch_size=train_cfg.batch_size)
    logger.info("forecast test mse %.6f mae %.6f", report["mse"], report["mae"])
    return FinetuneResult(model=model, report=report, losses=losses)


def finetune_classify(
    checkpoint: Checkpoint | None,
    data: ClassifyData,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
) -> FinetuneResult:
    """Cross-entropy training; macro metrics on the test split."""
    if train_cfg.classes != data.classes:
        raise ConfigError(f"data holds {data.classes} classes, train config says {train_cfg.classes}")
    train_inputs, train_labels = data.train
    keep = training_subset(train_inputs.size, train_cfg)
    train_inputs, train_labels = train_inputs.take(keep), train_labels[keep]
    logger.info("fine-tuning on %d of %d train samples", len(keep), data.train[0].size)

    streams = seed_streams(train_cfg.seed)
    model = ClassifyModel(model_cfg, data.classes, streams.rng("model"), streams.rng("head"))
    _transfer_encoder(checkpoint, model)

    def loss_fn(logits: Tensor, index: IntArray) -> Tensor:
        return cross_entropy(logits, train_labels[index])

    losses = _fit(model, train_inputs, loss_fn, train_cfg)
    report = evaluate_classify(model, data.test, split="test", batch_size=train_cfg.batch_size)
    logger.info("classification test accuracy %.2f%%", report["accuracy"])
    return FinetuneResult(model=model, report=report, losses=losses)


def predict(model: ForecastModel | ClassifyModel, inputs: SeriesBatch, batch_size: int = 32) -> Array:
    """Model outputs for every row of inputs, in order, without recording a graph."""
    with no_grad():
        parts = [model(inputs.take(index).values).numpy() for index in iterate_batches(inputs.size, batch_size)]
    return np.concatenate(parts, axis=0)


def evaluate_forecast(
    model: ForecastModel,
    split_data: tuple[SeriesBatch, Tensor],
    split: str = "test",
    batch_size: int = 32,
) -> MetricsReport:
    inputs, targets = split_data
    return forecast_metrics(predict(model, inputs, batch_size), targets.values, split=split)


def evaluate_classify(
    model: ClassifyModel,
    split_data: tuple[SeriesBatch, IntArray],
    split: str = "test",
    batch_size: int = 32,
) -> MetricsReport:
    inputs, labels = split_data
    predictions = predict(model, inputs, batch_size).argmax(axis=1)
    return classification_metrics(labels, predictions, model.classes, split=split)


def finetune_checkpoint(
    result: FinetuneResult,
    train_cfg: TrainConfig,
    config: dict[str, str] | None = None,
) -> Checkpoint:
    model = result.model
    if isinstance(model, ForecastModel):
        return capture(model, "forecast", model.cfg, _metadata(train_cfg, horizon=model.horizon), config)
    return capture(model, "classify", model.cfg, _metadata(train_cfg, classes=model.classes), config)
