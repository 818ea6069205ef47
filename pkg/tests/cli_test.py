"""Tests for the command-line entry point"""

from __future__ import annotations

import json
import os
import re
from pathlib import Path
from typing import Any
from unittest.mock import patch

import pytest

from simmtm.checkpoint import MAGIC
from simmtm.checkpoint import load_checkpoint
from simmtm.cli import EXIT_CHECKPOINT
from simmtm.cli import EXIT_CONFIG
from simmtm.cli import EXIT_DATA
from simmtm.cli import EXIT_DIVERGENCE
from simmtm.cli import EXIT_MISSING_FILE
from simmtm.cli import EXIT_OK
from simmtm.cli import EXIT_UNEXPECTED
from simmtm.cli import EXIT_USAGE
from simmtm.cli import exit_code
from simmtm.cli import main
from simmtm.config import RunConfig
from simmtm.configfile_loader import ConfigFileLoader
from simmtm.exceptions import DimensionError
from simmtm.exceptions import NonFiniteError
from simmtm.exceptions import ShapeMismatchError
from tests.conftest import TINY_RUN

ERROR_LINE = re.compile(r"^error kind=(\w+) exit=(\d) message=(\".*\")$")


def _error_line(capsys: Any) -> tuple[str, int, str]:
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("error ")]
    assert len(lines) == 1
    match = ERROR_LINE.match(lines[0])
    assert match is not None
    return match.group(1), int(match.group(2)), json.loads(match.group(3))


def _run(tmp_path: Path, *argv: str) -> int:
    return main([*argv, "--output-dir", str(tmp_path), *TINY_RUN])


def test_pretrain_writes_artifacts(tmp_path: Path) -> None:
    assert _run(tmp_path, "pretrain") == EXIT_OK

    names = sorted(path.name for path in tmp_path.iterdir())
    assert names == [
        "pretrain-seed0.ckpt",
        "pretrain-seed0.config",
        "pretrain-seed0.epochs.log",
        "pretrain-seed0.ingest.txt",
    ]
    assert load_checkpoint(tmp_path / "pretrain-seed0.ckpt").kind == "simmtm"
    log = (tmp_path / "pretrain-seed0.epochs.log").read_text(encoding="utf-8").splitlines()
    assert log[0] == "epoch,loss_rec,loss_con,weight_rec,weight_con,total"
    assert len(log) == 2


def test_config_echo_reads_back(tmp_path: Path) -> None:
    assert _run(tmp_path, "pretrain", "--mask.ratio", "0.25") == EXIT_OK

    loader = ConfigFileLoader(tmp_path / "pretrain-seed0.config")
    assert loader.run()
    echoed = RunConfig.from_flat(loader.values)
    assert echoed.mask.ratio == 0.25
    assert echoed.model.d_model == 8
    assert echoed.output_dir == str(tmp_path)


def test_pretrain_is_byte_reproducible(tmp_path: Path) -> None:
    assert _run(tmp_path / "a", "pretrain") == EXIT_OK
    assert _run(tmp_path / "b", "pretrain") == EXIT_OK
    for name in ("pretrain-seed0.ckpt", "pretrain-seed0.epochs.log"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_ablation_flag_zeroes_constraint(tmp_path: Path) -> None:
    assert _run(tmp_path, "pretrain", "--no-constraint") == EXIT_OK
    row = (tmp_path / "pretrain-seed0.epochs.log").read_text(encoding="utf-8").splitlines()[1].split(",")
    assert (row[2], row[4]) == ("0", "0")


def test_precedence_environ_file_override(tmp_path: Path, config_file: Path) -> None:
    with patch.dict(os.environ, {"SIMMTM_SEED": "3", "SIMMTM_MASK__COUNT": "1"}):
        assert _run(tmp_path / "env", "pretrain") == EXIT_OK
        assert _run(tmp_path / "file", "pretrain", "--config", str(config_file)) == EXIT_OK
        assert _run(tmp_path / "flag", "pretrain", "--config", str(config_file), "--seed", "9") == EXIT_OK

    assert (tmp_path / "env" / "pretrain-seed3.ckpt").is_file()
    assert "mask.count=1\n" in (tmp_path / "env" / "pretrain-seed3.config").read_text(encoding="utf-8")
    assert (tmp_path / "file" / "pretrain-seed7.ckpt").is_file()
    assert "mask.count=2\n" in (tmp_path / "file" / "pretrain-seed7.config").read_text(encoding="utf-8")
    assert (tmp_path / "flag" / "pretrain-seed9.ckpt").is_file()


def test_finetune_then_evaluate(tmp_path: Path) -> None:
    assert _run(tmp_path, "pretrain") == EXIT_OK
    checkpoint = str(tmp_path / "pretrain-seed0.ckpt")
    assert _run(tmp_path, "finetune-forecast", "--checkpoint", checkpoint) == EXIT_OK

    metrics = (tmp_path / "finetune-forecast-seed0.metrics.txt").read_text(encoding="utf-8")
    assert metrics.startswith("task=forecast\nsplit=test\n")
    tuned = str(tmp_path / "finetune-forecast-seed0.ckpt")
    assert load_checkpoint(tuned).metadata["horizon"] == "4"

    assert _run(tmp_path, "evaluate", "--checkpoint", tuned) == EXIT_OK
    evaluated = (tmp_path / "evaluate-seed0.metrics.txt").read_text(encoding="utf-8")
    assert "split=val" in evaluated
    assert metrics.strip() in evaluated


def test_finetune_classify_from_scratch(tmp_path: Path, classify_csv: Path) -> None:
    code = _run(tmp_path, "finetune-classify", "--data.path", str(classify_csv))
    assert code == EXIT_OK
    config = (tmp_path / "finetune-classify-seed0.config").read_text(encoding="utf-8")
    assert "data.task=classify\n" in config
    assert (tmp_path / "finetune-classify-seed0.metrics.txt").read_text(encoding="utf-8").startswith("task=classify")


def test_analyze_cka_and_demo(tmp_path: Path) -> None:
    assert _run(tmp_path, "pretrain", "--model.e_layers", "2") == EXIT_OK
    pretrained = str(tmp_path / "pretrain-seed0.ckpt")
    assert _run(tmp_path, "finetune-forecast", "--checkpoint", pretrained, "--model.e_layers", "2") == EXIT_OK
    finetuned = str(tmp_path / "finetune-forecast-seed0.ckpt")

    code = _run(tmp_path, "analyze-cka", "--pretrained", pretrained, "--finetuned", finetuned, "--model.e_layers", "2")
    assert code == EXIT_OK
    assert "|delta cka|" in (tmp_path / "analyze-cka-seed0.metrics.txt").read_text(encoding="utf-8")

    assert _run(tmp_path, "reconstruct-demo", "--checkpoint", pretrained, "--model.e_layers", "2") == EXIT_OK
    assert (tmp_path / "reconstruct-demo-seed0.csv").is_file()
    assert (tmp_path / "reconstruct-demo-seed0.direct.ckpt").is_file()
    assert "simmtm_mse=" in (tmp_path / "reconstruct-demo-seed0.metrics.txt").read_text(encoding="utf-8")


def test_grid_search_writes_table(tmp_path: Path) -> None:
    assert _run(tmp_path, "grid-search", "--axis", "mask.count=1,2") == EXIT_OK
    lines = (tmp_path / "grid-search-seed0.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("mask.count,")
    assert len(lines) == 3


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["teach"],
        ["pretrain", "--bogus.key", "1"],
        ["pretrain", "--mask.ratio"],
        ["pretrain", "stray"],
        ["evaluate"],
    ],
)
def test_usage_errors(argv: list[str], tmp_path: Path, capsys: Any) -> None:
    code = main([*argv[:1], "--output-dir", str(tmp_path), *argv[1:]])
    assert code == EXIT_USAGE
    kind, exit_value, _ = _error_line(capsys)
    assert (kind, exit_value) == ("UsageError", EXIT_USAGE)


def test_config_error_line(tmp_path: Path, capsys: Any) -> None:
    assert _run(tmp_path, "pretrain", "--mask.ratio", "1.5") == EXIT_CONFIG
    kind, code, message = _error_line(capsys)
    assert (kind, code) == ("ConfigError", EXIT_CONFIG)
    assert "mask.ratio" in message


def test_missing_files(tmp_path: Path, capsys: Any) -> None:
    assert _run(tmp_path, "pretrain", "--config", str(tmp_path / "absent.conf")) == EXIT_MISSING_FILE
    assert _error_line(capsys)[:2] == ("FileNotFoundError", EXIT_MISSING_FILE)
    assert _run(tmp_path, "pretrain", "--data.path", str(tmp_path / "absent.csv")) == EXIT_MISSING_FILE
    assert _error_line(capsys)[:2] == ("FileNotFoundError", EXIT_MISSING_FILE)


def test_bad_cell_is_data_error(tmp_path: Path, capsys: Any) -> None:
    path = tmp_path / "broken.csv"
    path.write_text("a,b\n1,2\n3,x\n", encoding="utf-8")
    assert _run(tmp_path, "pretrain", "--data.path", str(path)) == EXIT_DATA
    kind, _, message = _error_line(capsys)
    assert kind == "IngestionError"
    assert "row 2, column 2" in message


def test_corrupt_checkpoint(tmp_path: Path, capsys: Any) -> None:
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint\nend\n")
    assert _run(tmp_path, "finetune-forecast", "--checkpoint", str(path)) == EXIT_CHECKPOINT
    assert _error_line(capsys)[:2] == ("IntegrityError", EXIT_CHECKPOINT)


def test_malformed_tensor_entry_is_a_checkpoint_error(tmp_path: Path, capsys: Any) -> None:
    path = tmp_path / "bad.ckpt"
    path.write_bytes(f"{MAGIC}\nversion=1\ntensor=a|1|0|8|9\nend\n".encode())
    assert _run(tmp_path, "finetune-forecast", "--checkpoint", str(path)) == EXIT_CHECKPOINT
    assert _error_line(capsys)[:2] == ("IntegrityError", EXIT_CHECKPOINT)


def test_divergence_exit(tmp_path: Path, capsys: Any) -> None:
    with patch("simmtm.training.loss_constraint", side_effect=NonFiniteError("inf")):
        assert _run(tmp_path, "pretrain") == EXIT_DIVERGENCE
    assert _error_line(capsys)[:2] == ("DivergenceError", EXIT_DIVERGENCE)


def test_unexpected_error(tmp_path: Path, capsys: Any) -> None:
    with patch("simmtm.cli.load_data", side_effect=RuntimeError("boom")):
        assert _run(tmp_path, "pretrain") == EXIT_UNEXPECTED
    assert _error_line(capsys) == ("RuntimeError", EXIT_UNEXPECTED, "boom")


@pytest.mark.parametrize(
    ("err", "expected"),
    [
        (DimensionError("x"), EXIT_DATA),
        (ShapeMismatchError("x", tensor="w"), EXIT_CHECKPOINT),
        (KeyError("x"), EXIT_UNEXPECTED),
    ],
)
def test_exit_code_mapping(err: BaseException, expected: int) -> None:
    assert exit_code(err) == expected
