"""Command-line entry point."""
import argparse
import os
from pathlib import Path
from typing import FrozenSet, List, Optional

import structlog
from pydantic import ValidationError

from cli.commands import COMMANDS
from cli.config import CliConfig, RunConfig
from gas_model.config import GasModelConfig
from gas_model.schedules import PRESETS
from shared.exceptions import ConfigError, TalInspectorException
from shared.logger import setup_logging
from shared.utils import parse_block_range, to_storage_key

logger = structlog.get_logger()


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _block_range(text: str):
    try:
        return parse_block_range(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def read_tx_file(path: Path) -> FrozenSet[str]:
    """Transaction hashes, one per line; blank lines and # comments ignored."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read tx file {path}: {e}") from e
    hashes = set()
    for number, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            hashes.add(to_storage_key(line))
        except ValueError as e:
            raise ConfigError(f"{path}:{number}: {e}") from e
    if not hashes:
        raise ConfigError(f"tx file {path} lists no transactions")
    return frozenset(hashes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="talinspector",
        description="Optimal and declared transaction access lists, measured in gas.",
    )
    common = argparse.ArgumentParser(add_help=False)
    source = common.add_argument_group("input")
    source.add_argument("--rpc-url", help="JSON-RPC endpoint (default: $RPC_URL when --corpus is absent)")
    source.add_argument("--corpus", type=Path, help="corpus directory with traces.ndjson and declared.ndjson")
    source.add_argument("--blocks", type=_block_range, help="inclusive block range A..B")
    source.add_argument("--tx-file", type=Path, help="file of transaction hashes, one per line")

    gas = common.add_argument_group("gas model")
    gas.add_argument("--schedule", choices=sorted(PRESETS), help="gas schedule preset (default berlin)")
    gas.add_argument("--schedule-file", type=Path, help="key=integer cost overrides")
    gas.add_argument("--coinbase-warm", type=_bool, metavar="true|false", help="block producer starts warm")
    gas.add_argument("--precompile-max", type=int, help="highest precompile address (default 9)")

    output = common.add_argument_group("output")
    output.add_argument("--out", type=Path, help="output directory")
    output.add_argument("--format", choices=("csv", "json"), help="report format")
    output.add_argument("--workers", type=int, help="worker processes for per-block analysis")
    output.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    output.add_argument("--log-format", choices=("json", "console"))

    commands = parser.add_subparsers(dest="command", required=True, metavar="command")
    commands.add_parser("optimize", parents=[common], help="optimal access list per transaction")
    commands.add_parser("audit", parents=[common], help="defects of declared access lists")
    commands.add_parser("block-report", parents=[common], help="start-of-block vs intra-block generation")
    commands.add_parser("stats", parents=[common], help="per-day access list adoption")
    fetch = commands.add_parser("fetch", parents=[common], help="write a corpus from a node")
    fetch.add_argument("--sob", action="store_true", help="also trace each tx on the parent block state")
    return parser


def run_config(args: argparse.Namespace, settings: CliConfig) -> RunConfig:
    """Merge flags over settings; flags win."""
    gas_overrides = {
        key: value
        for key, value in (
            ("schedule", args.schedule),
            ("schedule_file", args.schedule_file),
            ("coinbase_auto_warm", args.coinbase_warm),
            ("precompile_max", args.precompile_max),
        )
        if value is not None
    }
    rpc_url = args.rpc_url
    if rpc_url is None and args.corpus is None:
        rpc_url = os.environ.get("RPC_URL")

    try:
        return RunConfig(
            command=args.command,
            rpc_url=rpc_url,
            corpus=args.corpus,
            blocks=args.blocks,
            tx_hashes=read_tx_file(args.tx_file) if args.tx_file else frozenset(),
            gas=GasModelConfig(**gas_overrides),
            out_dir=args.out or settings.out_dir,
            report_format=args.format or settings.report_format,
            workers=args.workers if args.workers is not None else settings.workers,
            sob=getattr(args, "sob", False),
        )
    except ValidationError as e:
        error = e.errors()[0]
        where = ".".join(str(part) for part in error["loc"])
        raise ConfigError(f"{where}: {error['msg']}" if where else error["msg"]) from e


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand. Returns the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        settings = CliConfig()
    except ValidationError as e:
        setup_logging()
        logger.error("Invalid settings", error=str(e))
        return ConfigError.exit_code
    setup_logging(args.log_level or settings.log_level, args.log_format or settings.log_format)

    try:
        cfg = run_config(args, settings)
        logger.info("Running command", command=cfg.command, source=cfg.source.value, out_dir=str(cfg.out_dir))
        COMMANDS[cfg.command](cfg)
    except TalInspectorException as e:
        logger.error("Command failed", command=args.command, error_type=type(e).__name__, error=str(e))
        return e.exit_code
    except Exception as e:
        logger.exception("Unexpected failure", command=args.command, error=str(e))
        return 1
    return 0
