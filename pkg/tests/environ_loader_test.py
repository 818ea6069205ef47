"""Simple test to ensure we read environ"""

from __future__ import annotations

import os
from collections.abc import Generator
from unittest.mock import patch

import pytest

from simmtm.environ_loader import EnvironLoader
from simmtm.environ_loader import environ_key

MOCK_ENV = {
    "SIMMTM_SEED": "3",
    "SIMMTM_MASK__RATIO": "0.25",
    "SIMMTM_MODEL__ENCODER_KIND": "conv_resnet",
    "UNRELATED_SEED": "9",
}

EXPECTED = {
    "seed": "3",
    "mask.ratio": "0.25",
    "model.encoder_kind": "conv_resnet",
}


@pytest.fixture
def environ_loader() -> Generator[EnvironLoader, None, None]:
    """A fixture because this is what we do"""
    loader = EnvironLoader()
    assert not loader.values
    yield loader


def test_load_env_vars(environ_loader: EnvironLoader) -> None:
    """Load and confirm values from environ"""
    with patch.dict(os.environ, MOCK_ENV):
        environ_loader._load_values()
        assert environ_loader.values == EXPECTED


def test_run_load_values(environ_loader: EnvironLoader) -> None:
    with patch.dict(os.environ, MOCK_ENV):
        assert environ_loader.run()
        for key, value in EXPECTED.items():
            assert environ_loader.values.get(key) == value, f"{key}, {value}"


@pytest.mark.parametrize(
    ("name", "key"),
    [
        ("SIMMTM_SEED", "seed"),
        ("SIMMTM_DATA__TRAIN_FRACTION", "data.train_fraction"),
        ("SIMMTM_OUTPUT_DIR", "output_dir"),
    ],
)
def test_environ_key(name: str, key: str) -> None:
    assert environ_key(name) == key
