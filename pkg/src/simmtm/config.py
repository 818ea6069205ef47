"""
Typed run configuration resolved from flat `section.key` text values.

Every section is a frozen dataclass; its flat keys are the dataclass
field names under the section prefix. Missing keys take the dataclass
defaults, unknown keys and unparsable values raise ConfigError.
`RunConfig.to_flat()` renders every effective key, and reading that echo
back yields an equal RunConfig.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass
from dataclasses import field
from dataclasses import fields
from dataclasses import replace
from pathlib import Path
from typing import Any
from typing import TypeVar

from simmtm.dataset import CsvSchema
from simmtm.dataset import SplitSpec
from simmtm.exceptions import ConfigError
from simmtm.losses import LossConfig
from simmtm.masking import MaskConfig
from simmtm.model import ModelConfig
from simmtm.similarity import AggregationConfig
from simmtm.synthetic import SynthSpec
from simmtm.training import TrainConfig

TASKS = ("forecast", "classify")
TRAIN_KEYS = ("learning_rate", "batch_size", "epochs")
TOP_LEVEL_KEYS = ("seed", "output_dir")
TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off")

T = TypeVar("T")


@dataclass(frozen=True)
class DataConfig:
    """
    Where the data comes from and how it is cut.

    An empty `path` selects the synthetic generator described by the
    `synth` section. Windows are `model.input_length` long; classification
    samples are `model.input_length` rows each.
    """

    task: str = "forecast"
    path: str = ""
    horizon: int = 16
    stride: int = 1
    eval_stride: int = 1
    train_fraction: float = 0.7
    val_fraction: float = 0.1
    test_fraction: float = 0.2
    chronological: bool = True
    label_column: str = "label"
    ignore_columns: str = "date"

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"data.task must be one of {TASKS}, got '{self.task}'")
        for name in ("horizon", "stride", "eval_stride"):
            if getattr(self, name) < 1:
                raise ConfigError(f"data.{name} must be positive, got {getattr(self, name)}")
        SplitSpec(self.train_fraction, self.val_fraction, self.test_fraction, self.chronological)

    @property
    def split(self) -> SplitSpec:
        return SplitSpec(self.train_fraction, self.val_fraction, self.test_fraction, self.chronological)

    @property
    def schema(self) -> CsvSchema:
        ignored = tuple(name.strip() for name in self.ignore_columns.split(",") if name.strip())
        return CsvSchema(label_column=self.label_column, ignore_columns=ignored)


def _pretrain_defaults() -> TrainConfig:
    return TrainConfig(phase="pretrain", learning_rate=1e-3, batch_size=32, epochs=50)


def _finetune_defaults() -> TrainConfig:
    return TrainConfig(phase="finetune_forecast", learning_rate=1e-4, batch_size=32, epochs=10, horizon=16)


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)
    mask: MaskConfig = field(default_factory=MaskConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    pretrain: TrainConfig = field(default_factory=_pretrain_defaults)
    finetune: TrainConfig = field(default_factory=_finetune_defaults)
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.data.path and not Path(self.data.path).is_file():
            raise FileNotFoundError(f"data.path '{self.data.path}' does not exist")

    @classmethod
    def from_flat(cls, values: Mapping[str, str]) -> RunConfig:
        """
        Resolve flat text values over the defaults.

        Raises:
            simmtm.exceptions.ConfigError: Unknown key or invalid value.
            FileNotFoundError: data.path names a missing file.
        """
        unknown = sorted(set(values) - set(known_keys()))
        if unknown:
            raise ConfigError(f"unknown configuration keys {unknown}")

        defaults = cls()
        sections: dict[str, Any] = {}
        for section, allowed in SECTIONS.items():
            base = getattr(defaults, section)
            updates = {
                name: _coerce(f"{section}.{name}", values[f"{section}.{name}"], getattr(base, name))
                for name in allowed
                if f"{section}.{name}" in values
            }
            sections[section] = _rebuild(section, base, updates)

        top = {
            name: _coerce(name, values[name], getattr(defaults, name)) for name in TOP_LEVEL_KEYS if name in values
        }
        return cls(**sections, **top)

    def to_flat(self) -> dict[str, str]:
        flat: dict[str, str] = {}
        for section, allowed in SECTIONS.items():
            obj = getattr(self, section)
            for name in allowed:
                flat[f"{section}.{name}"] = format_value(getattr(obj, name))
        for name in TOP_LEVEL_KEYS:
            flat[name] = format_value(getattr(self, name))
        return flat

    def render(self) -> str:
        """Effective configuration as a config file, keys sorted."""
        return "".join(f"{key}={value}\n" for key, value in sorted(self.to_flat().items()))

    def train_config(self, phase: str, classes: int = 0) -> TrainConfig:
        """Phase settings bound to the run seed and the data's horizon."""
        base = self.pretrain if phase == "pretrain" else self.finetune
        return replace(base, phase=phase, seed=self.seed, horizon=self.data.horizon, classes=classes)

    def mask_config(self) -> MaskConfig:
        return replace(self.mask, seed=self.seed)

    def artifact(self, subcommand: str, extension: str) -> Path:
        return Path(self.output_dir) / f"{subcommand}-seed{self.seed}.{extension}"


def _field_names(cls: type, exclude: tuple[str, ...] = ()) -> tuple[str, ...]:
    return tuple(f.name for f in fields(cls) if f.name not in exclude)


SECTIONS: dict[str, tuple[str, ...]] = {
    "data": _field_names(DataConfig),
    "synth": _field_names(SynthSpec),
    "mask": _field_names(MaskConfig, exclude=("seed",)),
    "model": _field_names(ModelConfig),
    "aggregation": _field_names(AggregationConfig),
    "loss": _field_names(LossConfig),
    "pretrain": TRAIN_KEYS,
    "finetune": (*TRAIN_KEYS, "train_proportion"),
}


def known_keys() -> list[str]:
    keys = [f"{section}.{name}" for section, names in SECTIONS.items() for name in names]
    return keys + list(TOP_LEVEL_KEYS)


def format_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(key: str, text: str, default: object) -> Any:
    text = text.strip()
    if isinstance(default, bool):
        if text.lower() in TRUE_WORDS:
            return True
        if text.lower() in FALSE_WORDS:
            return False
        raise ConfigError(f"{key} expects true/false, got '{text}'")
    if isinstance(default, int):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{key} expects an integer, got '{text}'") from None
    if isinstance(default, float):
        try:
            number = float(text)
        except ValueError:
            raise ConfigError(f"{key} expects a number, got '{text}'") from None
        if not math.isfinite(number):
            raise ConfigError(f"{key} must be finite, got '{text}'")
        return number
    return text


def _rebuild(section: str, base: T, updates: dict[str, Any]) -> T:
    if not updates:
        return base
    try:
        return replace(base, **updates)  # type: ignore[type-var]
    except ConfigError as err:
        raise ConfigError(f"[{section}] {err}") from err
