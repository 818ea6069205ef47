"""Unit tests for the synthetic dataset generators"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import pytest

from simmtm.dataset import load_csv
from simmtm.dataset import segment_samples
from simmtm.exceptions import ConfigError
from simmtm.synthetic import SynthSpec
from simmtm.synthetic import class_frequency
from simmtm.synthetic import gen_classify
from simmtm.synthetic import gen_forecast
from simmtm.synthetic import write_csv


def _autocorrelation(x: np.ndarray, lag: int) -> float:
    return float(np.corrcoef(x[:-lag], x[lag:])[0, 1])


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": "walk"},
        {"noise": -0.1},
        {"freq_min": 0.0},
        {"freq_min": 0.2, "freq_max": 0.1},
        {"amp_min": 2.0, "amp_max": 1.0},
        {"min_components": 0},
        {"classes": 1},
        {"length": 0},
        {"seed": -1},
    ],
)
def test_invalid_spec(kwargs: dict[str, Any]) -> None:
    with pytest.raises(ConfigError):
        SynthSpec(**kwargs)


def test_gen_forecast_is_deterministic() -> None:
    spec = SynthSpec(length=300, channels=3, seed=4)
    first, second = gen_forecast(spec), gen_forecast(spec)
    assert first.columns == ("v0", "v1", "v2")
    assert first.rows.shape == (300, 3)
    assert np.array_equal(first.rows, second.rows)
    assert not np.array_equal(first.rows, gen_forecast(SynthSpec(length=300, channels=3, seed=5)).rows)


def test_single_noiseless_sinusoid_is_bounded() -> None:
    spec = SynthSpec(length=500, min_components=1, max_components=1, noise=0.0, trend=0.001, seed=2)
    rows = gen_forecast(spec).rows
    assert np.all(np.abs(rows) <= spec.amp_max + spec.trend * spec.length)


def test_period_shows_in_autocorrelation() -> None:
    spec = SynthSpec(length=400, min_components=1, max_components=1, freq_min=0.05, freq_max=0.05, noise=0.0, trend=0.0)
    series = gen_forecast(spec).rows[:, 0]
    assert _autocorrelation(series, 20) > _autocorrelation(series, 10)


def test_trend_season_kind() -> None:
    spec = SynthSpec(kind="trend_season", length=200, channels=2, seed=1)
    assert gen_forecast(spec).rows.shape == (200, 2)
    assert np.array_equal(gen_forecast(spec).rows, gen_forecast(spec).rows)


def test_gen_forecast_rejects_classification_kind() -> None:
    with pytest.raises(ConfigError):
        gen_forecast(SynthSpec(kind="class_waveforms"))


def test_class_frequencies_span_range() -> None:
    spec = SynthSpec(kind="class_waveforms", classes=3, freq_min=0.02, freq_max=0.08)
    assert [class_frequency(spec, k) for k in range(3)] == pytest.approx([0.02, 0.05, 0.08])


def test_gen_classify_is_balanced() -> None:
    spec = SynthSpec(kind="class_waveforms", classes=2, samples=100, sample_length=16, seed=3)
    _, labels = segment_samples(gen_classify(spec), 16)
    assert np.bincount(labels).tolist() == [50, 50]


def test_gen_classify_is_deterministic() -> None:
    spec = SynthSpec(kind="class_waveforms", classes=3, samples=12, sample_length=8, seed=3)
    first, second = gen_classify(spec), gen_classify(spec)
    assert first.labels is not None and second.labels is not None
    assert np.array_equal(first.labels, second.labels)
    assert np.array_equal(first.rows, second.rows)


def test_noiseless_classes_are_nearest_neighbor_separable() -> None:
    spec = SynthSpec(kind="class_waveforms", classes=2, samples=40, noise=0.0, seed=8)
    samples, labels = segment_samples(gen_classify(spec), spec.sample_length)
    flat = samples.reshape(len(labels), -1)
    distances = np.linalg.norm(flat[:, None, :] - flat[None, :, :], axis=2)
    np.fill_diagonal(distances, np.inf)
    assert np.array_equal(labels[distances.argmin(axis=1)], labels)


def test_class_means_are_far_apart_at_defaults() -> None:
    spec = SynthSpec(kind="class_waveforms")
    samples, labels = segment_samples(gen_classify(spec), spec.sample_length)
    means = [samples[labels == k].mean(axis=0) for k in range(spec.classes)]
    assert np.linalg.norm(means[0] - means[1]) > 5 * spec.noise


def test_written_csv_loads_back(tmp_path: Path) -> None:
    spec = SynthSpec(kind="class_waveforms", classes=2, samples=6, sample_length=4, seed=1)
    dataset = gen_classify(spec)
    path = tmp_path / "waves.csv"
    write_csv(dataset, path)

    loaded = load_csv(path)
    assert loaded.name == "waves"
    assert loaded.columns == dataset.columns
    assert loaded.labels is not None and dataset.labels is not None
    assert np.array_equal(loaded.labels, dataset.labels)
    np.testing.assert_allclose(loaded.rows, dataset.rows, rtol=1e-15, atol=1e-15)
