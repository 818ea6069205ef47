"""
End-to-end runs assembled from a RunConfig: data, pre-training,
fine-tuning, evaluation and the sensitivity grid.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from dataclasses import replace

import pandas as pd

from simmtm.checkpoint import Checkpoint
from simmtm.checkpoint import build_module
from simmtm.config import RunConfig
from simmtm.config import known_keys
from simmtm.dataset import ClassifyData
from simmtm.dataset import ForecastData
from simmtm.dataset import IngestionReport
from simmtm.dataset import RawDataset
from simmtm.dataset import SeriesBatch
from simmtm.dataset import load_csv
from simmtm.dataset import prepare_classify
from simmtm.dataset import prepare_forecast
from simmtm.dataset import segment_samples
from simmtm.dataset import split_samples
from simmtm.exceptions import CheckpointError
from simmtm.exceptions import ConfigError
from simmtm.metrics import MetricsReport
from simmtm.model import ModelConfig
from simmtm.synthetic import gen_classify
from simmtm.synthetic import gen_forecast
from simmtm.training import FinetuneResult
from simmtm.training import PretrainResult
from simmtm.training import evaluate_classify
from simmtm.training import evaluate_forecast
from simmtm.training import finetune_classify
from simmtm.training import finetune_forecast
from simmtm.training import pretrain
from simmtm.training import pretrain_direct

SAMPLE_LIMIT = 256
SPLITS = ("val", "test")

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunData:
    task: str
    forecast: ForecastData | None = None
    classify: ClassifyData | None = None

    @property
    def report(self) -> IngestionReport:
        return self.forecast.report if self.forecast is not None else self.classify.report  # type: ignore[union-attr]

    @property
    def channels(self) -> int:
        return int(self.split("train").values.shape[2])

    @property
    def classes(self) -> int:
        return 0 if self.classify is None else self.classify.classes

    def split(self, name: str) -> SeriesBatch:
        data = self.forecast if self.forecast is not None else self.classify
        return getattr(data, name)[0]  # type: ignore[no-any-return]


def with_task(run: RunConfig, task: str) -> RunConfig:
    return run if run.data.task == task else replace(run, data=replace(run.data, task=task))


def load_raw(run: RunConfig) -> RawDataset:
    """CSV at data.path, or the synthetic generator of the synth section."""
    if run.data.path:
        return load_csv(run.data.path, run.data.schema)
    if run.data.task == "classify":
        if run.synth.sample_length != run.model.input_length:
            raise ConfigError(
                f"synth.sample_length {run.synth.sample_length} must equal model.input_length {run.model.input_length}"
            )
        return gen_classify(run.synth)
    return gen_forecast(run.synth)


def load_data(run: RunConfig) -> RunData:
    raw = load_raw(run)
    if run.data.task == "forecast":
        forecast = prepare_forecast(
            raw,
            run.model.input_length,
            run.data.horizon,
            split=run.data.split,
            stride=run.data.stride,
            eval_stride=run.data.eval_stride,
        )
        return RunData(task="forecast", forecast=forecast)

    samples, labels = segment_samples(raw, run.model.input_length)
    train, val, test = split_samples(samples, labels, run.data.split, seed=run.seed)
    return RunData(task="classify", classify=prepare_classify(train, val, test, name=raw.name, columns=raw.columns))


def model_config(run: RunConfig, data: RunData) -> ModelConfig:
    """Forecasting encodes channels independently; classification sees all channels."""
    if data.task == "classify" and run.model.in_channels != data.channels:
        logger.info("model.in_channels set to the data's %d channels", data.channels)
        return replace(run.model, in_channels=data.channels)
    return run.model


def run_pretrain(run: RunConfig, data: RunData | None = None, direct: bool = False) -> PretrainResult:
    data = data or load_data(run)
    cfg = model_config(run, data)
    inputs = data.split("train")
    train_cfg = run.train_config("pretrain")
    if direct:
        return pretrain_direct(inputs, run.mask_config(), cfg, train_cfg, config=run.to_flat())
    return pretrain(inputs, run.mask_config(), cfg, train_cfg, run.aggregation, run.loss, config=run.to_flat())


def run_finetune(run: RunConfig, checkpoint: Checkpoint | None, data: RunData | None = None) -> FinetuneResult:
    data = data or load_data(run)
    cfg = model_config(run, data)
    if data.forecast is not None:
        return finetune_forecast(checkpoint, data.forecast, cfg, run.train_config("finetune_forecast"))
    train_cfg = run.train_config("finetune_classify", classes=data.classes)
    return finetune_classify(checkpoint, data.classify, cfg, train_cfg)  # type: ignore[arg-type]


def run_evaluate(run: RunConfig, checkpoint: Checkpoint, data: RunData | None = None) -> list[MetricsReport]:
    """Validation and test metrics of a fine-tuned checkpoint."""
    if checkpoint.kind not in ("forecast", "classify"):
        raise CheckpointError(f"evaluate needs a fine-tuned checkpoint, got kind '{checkpoint.kind}'")
    data = data or load_data(with_task(run, checkpoint.kind))
    model = build_module(checkpoint)
    checkpoint.restore(model)
    batch_size = run.finetune.batch_size
    if data.forecast is not None:
        return [evaluate_forecast(model, getattr(data.forecast, split), split, batch_size) for split in SPLITS]
    return [evaluate_classify(model, getattr(data.classify, split), split, batch_size) for split in SPLITS]


def sample_batch(data: RunData) -> SeriesBatch:
    """First SAMPLE_LIMIT series of the test split."""
    test = data.split("test")
    return test.take(range(min(test.size, SAMPLE_LIMIT)))


def parse_axis(spec: str) -> tuple[str, list[str]]:
    """`key=v1,v2,...` -> (key, [v1, v2, ...])"""
    key, sep, values = spec.partition("=")
    key = key.strip()
    items = [value.strip() for value in values.split(",") if value.strip()]
    if not sep or not items:
        raise ConfigError(f"grid axis '{spec}' needs the form key=v1,v2")
    if key not in known_keys():
        raise ConfigError(f"grid axis names unknown key '{key}'")
    return key, items


def grid_cells(run: RunConfig, axes: Sequence[tuple[str, list[str]]]) -> list[dict[str, str]]:
    """Flat configs of every cell, in the order of the cartesian product of the axes."""
    base = run.to_flat()
    keys = [key for key, _ in axes]
    if len(set(keys)) != len(keys):
        raise ConfigError(f"grid axes repeat a key: {keys}")
    return [{**base, **dict(zip(keys, combo))} for combo in itertools.product(*(values for _, values in axes))]


def run_cell(flat: dict[str, str]) -> dict[str, float]:
    """Pre-train then fine-tune one grid cell; returns validation and test metrics."""
    run = RunConfig.from_flat(flat)
    data = load_data(run)
    pretrained = run_pretrain(run, data)
    tuned = run_finetune(run, pretrained.checkpoint, data)
    batch_size = run.finetune.batch_size
    if data.forecast is not None:
        val = evaluate_forecast(tuned.model, data.forecast.val, "val", batch_size)  # type: ignore[arg-type]
    else:
        val = evaluate_classify(tuned.model, data.classify.val, "val", batch_size)  # type: ignore[arg-type, union-attr]
    row = {f"val_{name}": value for name, value in val.metrics.items()}
    row.update({f"test_{name}": value for name, value in tuned.report.metrics.items()})
    row["final_pretrain_loss"] = pretrained.log[-1].total
    return row


def grid_search(run: RunConfig, axes: Sequence[tuple[str, list[str]]], workers: int = 1) -> pd.DataFrame:
    """
    One pretrain + finetune run per cell, all with the run seed.

    Cells are independent, so running them in a process pool gives the
    same table; rows follow the cartesian-product order of the axes.
    """
    if not axes:
        raise ConfigError("grid search needs at least one --axis")
    cells = grid_cells(run, axes)
    logger.info("grid search over %d cells with %d worker(s)", len(cells), workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(cell) for cell in cells]

    keys = [key for key, _ in axes]
    rows = [{**{key: cell[key] for key in keys}, **result} for cell, result in zip(cells, results)]
    return pd.DataFrame(rows)
