"""
Tensor Radon - Command Line Entry Point

This script runs one experiment subcommand (phantom, forward, invert,
decompose, slice-check, reshetnyak, range-check, ucp-odd, ucp-even,
selftest) on the generalized Radon transform library.

Configuration is merged from settings defaults, an optional dotenv-style
file (--config) and dotted command-line overrides such as --grid.N=64.

Exit codes: 0 success, 1 checker failure, 2 usage error, 3 I/O error.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import dotenv_values, load_dotenv

# Load environment variables first
load_dotenv()

from pydantic import ValidationError

from app.config.settings import LOG_LEVEL, OUTPUT_DIR
from app.models.experiment import COMMANDS, ExperimentConfig, nest_flat_config
from app.services.experiments.runner import run
from app.utils.errors import TensorRadonError
from app.utils.run_logging import log_exit_code, setup_run_logging

# Get logger for this module
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3


def parse_overrides(extras: List[str]) -> Dict[str, str]:
    """--grid.N=64 and --grid.N 64 become {"grid.N": "64"}; a bare --quick becomes "true"."""
    overrides: Dict[str, str] = {}
    position = 0
    while position < len(extras):
        item = extras[position]
        if not item.startswith("--") or len(item) == 2:
            raise ValueError(f"Unexpected argument {item!r}; overrides look like --grid.N=64")
        key, separator, value = item[2:].partition("=")
        if not separator:
            following = extras[position + 1] if position + 1 < len(extras) else None
            if following is not None and not following.startswith("--"):
                value = following
                position += 1
            else:
                value = "true"
        overrides[key] = value
        position += 1
    return overrides


def build_config(command: str, config_path: Optional[str], overrides: Dict[str, str]) -> ExperimentConfig:
    """
    Merge file values and overrides into a validated ExperimentConfig.

    Args:
        command: Subcommand name
        config_path: dotenv-style file with dotted keys, optional
        overrides: Dotted command-line overrides

    Returns:
        ExperimentConfig
    """
    flat: Dict[str, Optional[str]] = {}
    if config_path is not None:
        if not Path(config_path).is_file():
            raise ValueError(f"Config file {config_path} does not exist")
        flat.update(dotenv_values(config_path))
    nested = nest_flat_config(flat, command)
    for key, value in nest_flat_config(overrides, command).items():
        if isinstance(value, dict):
            nested.setdefault(key, {}).update(value)
        else:
            nested[key] = value
    nested["command"] = command
    return ExperimentConfig(**nested)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tensor-radon",
        description="Generalized Radon transform experiments on symmetric tensor fields",
        epilog="Any configuration key is also an override, e.g. --grid.N=64 --transform.m=2",
    )
    parser.add_argument("command", choices=COMMANDS, help="Subcommand to run")
    parser.add_argument("--config", help="dotenv-style file with dotted keys (grid.N=64)")
    parser.add_argument("--log-level", default=LOG_LEVEL, help=f"Logging level (default: {LOG_LEVEL})")
    parser.add_argument("--no-console", action="store_true", help="Only write run_log.jsonl")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the subcommand and map failures to exit codes"""
    parser = build_parser()
    try:
        args, extras = parser.parse_known_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    try:
        config = build_config(args.command, args.config, parse_overrides(extras))
    except (ValidationError, ValueError) as e:
        print(f"Invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE

    level = getattr(logging, str(args.log_level).upper(), logging.INFO)
    run_handler = setup_run_logging(
        level=level,
        log_path=Path(config.output or OUTPUT_DIR) / "run_log.jsonl",
        console_logging=not args.no_console,
        command=config.command,
        seed=config.seed,
    )

    code = EXIT_CHECK_FAILED
    try:
        code = run(config)
    except OSError as e:
        logger.error(f"I/O failure in {config.command}: {e}", exc_info=True)
        code = EXIT_IO
    except (ValidationError, ValueError, KeyError) as e:
        logger.error(f"{config.command} rejected its input: {e}", exc_info=True)
        code = EXIT_USAGE
    except TensorRadonError as e:
        logger.error(f"{config.command} failed: {e}", exc_info=True)
        code = EXIT_CHECK_FAILED
    except KeyboardInterrupt:
        logger.info("Run interrupted by user")
        code = EXIT_CHECK_FAILED
    finally:
        log_exit_code(config.command, code, logger)
        if run_handler is not None:
            logging.getLogger().removeHandler(run_handler)
            run_handler.close()


if __name__ == "__main__":
    sys.exit(main())
