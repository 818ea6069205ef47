"""Global fixtures and statics"""

from __future__ import annotations

import os
from collections.abc import Generator
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from simmtm.dataset import SeriesBatch
from simmtm.model import ModelConfig
from simmtm.synthetic import SynthSpec
from simmtm.synthetic import gen_classify
from simmtm.synthetic import gen_forecast
from simmtm.synthetic import write_csv
from simmtm.tensor import Tensor

CONFIG_FILE_CONTENTS = [
    "# small forecasting run",
    "",
    "seed = 7",
    "mask.ratio=0.25",
    "  mask.count = 2",
    'model.encoder_kind="transformer"',
    "export pretrain.epochs = 1",
    "aggregation.candidate_set = 'PSA'",
]

CONFIG_FILE_EXPECTED = {
    "seed": "7",
    "mask.ratio": "0.25",
    "mask.count": "2",
    "model.encoder_kind": "transformer",
    "pretrain.epochs": "1",
    "aggregation.candidate_set": "PSA",
}

# Overrides that keep end-to-end runs to a few seconds
TINY_RUN = [
    "--model.input_length",
    "8",
    "--model.d_model",
    "8",
    "--model.n_heads",
    "2",
    "--model.e_layers",
    "1",
    "--data.horizon",
    "4",
    "--data.stride",
    "4",
    "--data.eval_stride",
    "4",
    "--synth.length",
    "200",
    "--pretrain.epochs",
    "1",
    "--pretrain.batch_size",
    "8",
    "--finetune.epochs",
    "1",
    "--finetune.batch_size",
    "8",
]


@pytest.fixture(autouse=True)
def mask_simmtm_environ() -> Generator[None, None, None]:
    """Hide SIMMTM_* variables of the developer's shell"""
    with patch.dict(os.environ):
        for key in [name for name in os.environ if name.startswith("SIMMTM_")]:
            os.environ.pop(key)
        yield None


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    """Builds and returns the path of a mock run configuration file"""
    path = tmp_path / "run.conf"
    path.write_text("\n".join(CONFIG_FILE_CONTENTS), encoding="utf-8")
    return path


@pytest.fixture
def tiny_model_cfg() -> ModelConfig:
    return ModelConfig(d_model=8, n_heads=2, e_layers=1, input_length=8)


@pytest.fixture
def series_batch() -> SeriesBatch:
    """Four standardized-looking series of length 8, one channel"""
    values = np.random.default_rng(11).normal(size=(4, 8, 1))
    return SeriesBatch(values=Tensor(values), origin=np.arange(4))


@pytest.fixture
def forecast_csv(tmp_path: Path) -> Path:
    path = tmp_path / "sines.csv"
    write_csv(gen_forecast(SynthSpec(length=200, channels=2, seed=3)), path)
    return path


@pytest.fixture
def classify_csv(tmp_path: Path) -> Path:
    path = tmp_path / "waves.csv"
    spec = SynthSpec(kind="class_waveforms", classes=3, samples=30, sample_length=8, noise=0.05, seed=5)
    write_csv(gen_classify(spec), path)
    return path
