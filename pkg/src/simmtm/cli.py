"""
Command-line entry point.

    simmtm <subcommand> [--config FILE] [fixed flags] [--section.key VALUE ...]

Configuration precedence, lowest first: defaults, SIMMTM_* environment,
config file, command-line overrides. Every run writes its effective
configuration next to its artifacts as `<subcommand>-seed<seed>.config`.

On failure exactly one line is printed to stderr:

    error kind=<ExceptionClass> exit=<code> message=<json string>
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Callable
from collections.abc import Sequence
from pathlib import Path
from typing import NoReturn

from simmtm.analysis import demo_summary
from simmtm.analysis import reconstruction_demo
from simmtm.analysis import representation_gap
from simmtm.checkpoint import load_checkpoint
from simmtm.checkpoint import save_checkpoint
from simmtm.config import RunConfig
from simmtm.config import known_keys
from simmtm.configbox import ConfigBox
from simmtm.configfile_loader import ConfigFileLoader
from simmtm.environ_loader import EnvironLoader
from simmtm.exceptions import CheckpointError
from simmtm.exceptions import ConfigError
from simmtm.exceptions import DegenerateInputError
from simmtm.exceptions import DimensionError
from simmtm.exceptions import DivergenceError
from simmtm.exceptions import EmptyInputError
from simmtm.exceptions import IngestionError
from simmtm.exceptions import InsufficientDataError
from simmtm.exceptions import UsageError
from simmtm.override_loader import OverrideLoader
from simmtm.pipeline import grid_search
from simmtm.pipeline import load_data
from simmtm.pipeline import parse_axis
from simmtm.pipeline import run_evaluate
from simmtm.pipeline import run_finetune
from simmtm.pipeline import run_pretrain
from simmtm.pipeline import sample_batch
from simmtm.pipeline import with_task
from simmtm.training import finetune_checkpoint
from simmtm.training import render_epoch_log
from simmtm.training import render_loss_log

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING_FILE = 4
EXIT_DATA = 5
EXIT_CHECKPOINT = 6
EXIT_DIVERGENCE = 7

EXIT_CODES: tuple[tuple[type[BaseException] | tuple[type[BaseException], ...], int], ...] = (
    (UsageError, EXIT_USAGE),
    (ConfigError, EXIT_CONFIG),
    (FileNotFoundError, EXIT_MISSING_FILE),
    ((IngestionError, EmptyInputError, InsufficientDataError, DegenerateInputError, DimensionError), EXIT_DATA),
    (CheckpointError, EXIT_CHECKPOINT),
    (DivergenceError, EXIT_DIVERGENCE),
)

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="simmtm", allow_abbrev=False, description="Masked time-series pre-training.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--checkpoint", help="input checkpoint (pre-trained or fine-tuned)")
    parser.add_argument("--pretrained", help="pre-trained checkpoint for analyze-cka")
    parser.add_argument("--finetuned", help="fine-tuned checkpoint for analyze-cka")
    parser.add_argument("--baseline", help="direct-reconstruction checkpoint for reconstruct-demo")
    parser.add_argument("--output-dir", dest="output_dir", help="artifact directory (output_dir)")
    parser.add_argument("--axis", action="append", default=[], help="grid axis key=v1,v2 (repeatable)")
    parser.add_argument("--workers", type=int, default=1, help="grid-search worker processes")
    parser.add_argument("--no-reconstruction", action="store_true", help="drop the reconstruction loss")
    parser.add_argument("--no-constraint", action="store_true", help="drop the constraint loss")
    parser.add_argument("--debug", action="store_true", help="debug logging")
    return parser


def resolve_config(args: argparse.Namespace, overrides: Sequence[str]) -> RunConfig:
    """
    Layer environment, config file and overrides over the defaults.

    Raises:
        FileNotFoundError: --config names a missing file.
        simmtm.exceptions.UsageError: An override names no known key.
    """
    override_loader = OverrideLoader(overrides)
    loaders = [EnvironLoader()]
    if args.config:
        if not Path(args.config).is_file():
            raise FileNotFoundError(f"config file '{args.config}' does not exist")
        loaders.append(ConfigFileLoader(args.config))
    loaders.append(override_loader)

    box = ConfigBox(debug_flag=args.debug)
    box.use_loaders(*loaders)

    unknown = sorted(set(override_loader.values) - set(known_keys()))
    if unknown:
        raise UsageError(f"unknown flag '--{unknown[0]}'")

    if args.output_dir:
        box.set("output_dir", args.output_dir, source="--output-dir")
    if args.no_reconstruction:
        box.set("loss.use_reconstruction", "false", source="--no-reconstruction")
    if args.no_constraint:
        box.set("loss.use_constraint", "false", source="--no-constraint")
    box.log_origins()
    return RunConfig.from_flat(box.values)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info("wrote '%s'", path)


def _require(value: str | None, flag: str, command: str) -> str:
    if not value:
        raise UsageError(f"{command} requires {flag}")
    return value


def cmd_pretrain(run: RunConfig, args: argparse.Namespace) -> None:
    data = load_data(run)
    _write(run.artifact("pretrain", "ingest.txt"), data.report.render())
    result = run_pretrain(run, data)
    save_checkpoint(result.checkpoint, run.artifact("pretrain", "ckpt"))
    _write(run.artifact("pretrain", "epochs.log"), render_epoch_log(result.log))


def _finetune(command: str, task: str, run: RunConfig, args: argparse.Namespace) -> None:
    checkpoint = load_checkpoint(args.checkpoint) if args.checkpoint else None
    data = load_data(run)
    _write(run.artifact(command, "ingest.txt"), data.report.render())
    result = run_finetune(run, checkpoint, data)
    train_cfg = run.train_config(f"finetune_{task}", classes=data.classes)
    save_checkpoint(finetune_checkpoint(result, train_cfg, run.to_flat()), run.artifact(command, "ckpt"))
    _write(run.artifact(command, "epochs.log"), render_loss_log(result.losses))
    _write(run.artifact(command, "metrics.txt"), result.report.render())


def cmd_finetune_forecast(run: RunConfig, args: argparse.Namespace) -> None:
    _finetune("finetune-forecast", "forecast", run, args)


def cmd_finetune_classify(run: RunConfig, args: argparse.Namespace) -> None:
    _finetune("finetune-classify", "classify", run, args)


def cmd_evaluate(run: RunConfig, args: argparse.Namespace) -> None:
    checkpoint = load_checkpoint(_require(args.checkpoint, "--checkpoint", "evaluate"))
    reports = run_evaluate(with_task(run, checkpoint.kind), checkpoint)
    _write(run.artifact("evaluate", "metrics.txt"), "\n".join(report.render() for report in reports))


def cmd_grid_search(run: RunConfig, args: argparse.Namespace) -> None:
    axes = [parse_axis(spec) for spec in args.axis]
    table = grid_search(run, axes, workers=args.workers)
    path = run.artifact("grid-search", "csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format="%.17g")
    logger.info("wrote '%s'", path)


def cmd_analyze_cka(run: RunConfig, args: argparse.Namespace) -> None:
    pretrained = load_checkpoint(_require(args.pretrained, "--pretrained", "analyze-cka"))
    finetuned = load_checkpoint(_require(args.finetuned, "--finetuned", "analyze-cka"))
    task = "classify" if finetuned.kind == "classify" else "forecast"
    batch = sample_batch(load_data(with_task(run, task)))
    report = representation_gap(pretrained, finetuned, batch)
    text = f"CKA batch: first {batch.size} series of the test split\n" + report.render()
    _write(run.artifact("analyze-cka", "metrics.txt"), text)


def cmd_reconstruct_demo(run: RunConfig, args: argparse.Namespace) -> None:
    simmtm = load_checkpoint(_require(args.checkpoint, "--checkpoint", "reconstruct-demo"))
    data = load_data(run)
    if args.baseline:
        direct = load_checkpoint(args.baseline)
    else:
        direct = run_pretrain(run, data, direct=True).checkpoint
        save_checkpoint(direct, run.artifact("reconstruct-demo", "direct.ckpt"))
    frame = reconstruction_demo(sample_batch(data), simmtm, direct, run.mask_config(), run.aggregation)
    path = run.artifact("reconstruct-demo", "csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    _write(run.artifact("reconstruct-demo", "metrics.txt"), demo_summary(frame).render())


COMMANDS: dict[str, Callable[[RunConfig, argparse.Namespace], None]] = {
    "pretrain": cmd_pretrain,
    "finetune-forecast": cmd_finetune_forecast,
    "finetune-classify": cmd_finetune_classify,
    "evaluate": cmd_evaluate,
    "grid-search": cmd_grid_search,
    "analyze-cka": cmd_analyze_cka,
    "reconstruct-demo": cmd_reconstruct_demo,
}

TASK_OF: dict[str, str] = {"finetune-forecast": "forecast", "finetune-classify": "classify"}


def exit_code(err: BaseException) -> int:
    for kinds, code in EXIT_CODES:
        if isinstance(err, kinds):
            return code
    return EXIT_UNEXPECTED


def report_error(err: BaseException) -> int:
    code = exit_code(err)
    print(f"error kind={type(err).__name__} exit={code} message={json.dumps(str(err))}", file=sys.stderr)
    return code


def configure_logging(debug: bool) -> None:
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("simmtm").setLevel(logging.DEBUG if debug else logging.INFO)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args, overrides = build_parser().parse_known_args(argv)
        configure_logging(args.debug)
        run = resolve_config(args, overrides)
        if args.command in TASK_OF:
            run = with_task(run, TASK_OF[args.command])
        _write(run.artifact(args.command, "config"), run.render())
        COMMANDS[args.command](run, args)
    except Exception as err:  # noqa: BLE001
        logger.debug("command failed", exc_info=True)
        return report_error(err)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
