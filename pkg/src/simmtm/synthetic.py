"""
Deterministic synthetic datasets standing in for benchmark data.

Generators are pure functions of their SynthSpec and emit `RawDataset`s
that `write_csv` turns into files `load_csv` ingests unchanged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from simmtm.dataset import RawDataset
from simmtm.exceptions import ConfigError
from simmtm.tensor import Array

FORECAST_KINDS = ("sin_mix", "trend_season")
SYNTH_KINDS = (*FORECAST_KINDS, "class_waveforms")
TREND_SEASON_BOOST = 5.0

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthSpec:
    """
    Knobs of the synthetic generators.

    Frequencies are in cycles per time step. Forecast series have T=length
    rows; classification data has `samples` groups of `sample_length` rows.
    `trend` bounds the per-step slope of the linear trend.
    """

    kind: str = "sin_mix"
    length: int = 2000
    channels: int = 1
    min_components: int = 2
    max_components: int = 4
    freq_min: float = 0.01
    freq_max: float = 0.1
    amp_min: float = 0.5
    amp_max: float = 1.5
    trend: float = 0.0005
    noise: float = 0.1
    classes: int = 2
    samples: int = 100
    sample_length: int = 64
    phase_jitter: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in SYNTH_KINDS:
            raise ConfigError(f"synth.kind must be one of {SYNTH_KINDS}, got '{self.kind}'")
        if self.noise < 0:
            raise ConfigError(f"synth.noise must be non-negative, got {self.noise}")
        if not 0 < self.freq_min <= self.freq_max:
            raise ConfigError(f"synth frequency range must be positive, got [{self.freq_min}, {self.freq_max}]")
        if not 0 <= self.amp_min <= self.amp_max:
            raise ConfigError(f"synth amplitude range is invalid: [{self.amp_min}, {self.amp_max}]")
        if not 1 <= self.min_components <= self.max_components:
            raise ConfigError("synth component counts need 1 <= min_components <= max_components")
        for name in ("length", "channels", "samples", "sample_length"):
            if getattr(self, name) < 1:
                raise ConfigError(f"synth.{name} must be positive, got {getattr(self, name)}")
        if self.classes < 2:
            raise ConfigError(f"synth.classes must be at least 2, got {self.classes}")
        if self.trend < 0 or self.phase_jitter < 0 or self.seed < 0:
            raise ConfigError("synth.trend, synth.phase_jitter and synth.seed must be non-negative")


def _columns(channels: int) -> tuple[str, ...]:
    return tuple(f"v{c}" for c in range(channels))


def _sin_mix_channel(spec: SynthSpec, rng: np.random.Generator, t: Array) -> Array:
    count = int(rng.integers(spec.min_components, spec.max_components + 1))
    values = np.zeros_like(t)
    for _ in range(count):
        frequency = rng.uniform(spec.freq_min, spec.freq_max)
        amplitude = rng.uniform(spec.amp_min, spec.amp_max)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        values += amplitude * np.sin(2.0 * np.pi * frequency * t + phase)
    return values + rng.uniform(-spec.trend, spec.trend) * t


def _trend_season_channel(spec: SynthSpec, rng: np.random.Generator, t: Array) -> Array:
    frequency = rng.uniform(spec.freq_min, spec.freq_max)
    amplitude = rng.uniform(spec.amp_min, spec.amp_max)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    season = amplitude * np.sin(2.0 * np.pi * frequency * t + phase)
    season += 0.25 * amplitude * np.sin(4.0 * np.pi * frequency * t + phase)
    slope = TREND_SEASON_BOOST * rng.uniform(-spec.trend, spec.trend)
    return season + slope * t


def gen_forecast(spec: SynthSpec) -> RawDataset:
    """Per channel: sinusoid mixture plus linear trend plus Gaussian noise."""
    if spec.kind not in FORECAST_KINDS:
        raise ConfigError(f"gen_forecast needs one of {FORECAST_KINDS}, got '{spec.kind}'")
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.length, dtype=np.float64)
    channel = _sin_mix_channel if spec.kind == "sin_mix" else _trend_season_channel
    rows = np.column_stack([channel(spec, rng, t) for _ in range(spec.channels)])
    rows = rows + spec.noise * rng.standard_normal(rows.shape)
    logger.debug("generated %s series: %d rows, %d channels", spec.kind, spec.length, spec.channels)
    return RawDataset(name=spec.kind, columns=_columns(spec.channels), rows=rows)


def class_frequency(spec: SynthSpec, label: int) -> float:
    """Base frequency of class `label`, evenly spread over [freq_min, freq_max]."""
    return float(spec.freq_min + label * (spec.freq_max - spec.freq_min) / (spec.classes - 1))


def class_waveform(spec: SynthSpec, label: int, phase: float) -> Array:
    """
    Noise-free waveform of one sample, [sample_length, channels].

    Shapes cycle sine, square, sawtooth by class; channel c is shifted by
    c * pi / 4.
    """
    t = np.arange(spec.sample_length, dtype=np.float64)[:, None]
    shift = np.arange(spec.channels, dtype=np.float64)[None, :] * np.pi / 4.0
    angle = 2.0 * np.pi * class_frequency(spec, label) * t + phase + shift
    amplitude = 0.5 * (spec.amp_min + spec.amp_max)
    shape = label % 3
    if shape == 0:
        wave = np.sin(angle)
    elif shape == 1:
        wave = np.tanh(4.0 * np.sin(angle))
    else:
        wave = 2.0 * (np.mod(angle, 2.0 * np.pi) / (2.0 * np.pi)) - 1.0
    return amplitude * wave


def gen_classify(spec: SynthSpec) -> RawDataset:
    """
    `samples` labeled groups of `sample_length` rows, classes balanced
    (counts differ by at most one) and in shuffled order.
    """
    rng = np.random.default_rng(spec.seed)
    labels = rng.permutation(np.arange(spec.samples) % spec.classes)
    phases = rng.uniform(-spec.phase_jitter, spec.phase_jitter, size=spec.samples)
    waves = np.stack([class_waveform(spec, int(k), float(p)) for k, p in zip(labels, phases)])
    waves = waves + spec.noise * rng.standard_normal(waves.shape)
    rows = waves.reshape(spec.samples * spec.sample_length, spec.channels)
    return RawDataset(
        name="class_waveforms",
        columns=_columns(spec.channels),
        rows=rows,
        labels=np.repeat(labels, spec.sample_length),
    )


def write_csv(d: RawDataset, path: str | Path, label_column: str = "label") -> None:
    """Header-first CSV; reals written with 17 significant digits."""
    frame = pd.DataFrame(d.rows, columns=list(d.columns))
    if d.labels is not None:
        frame[label_column] = d.labels
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info("wrote %d rows to '%s'", d.length, path)
