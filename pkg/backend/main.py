"""
Point-Interaction Spectra CLI
Command-line front end for spectra, spacing statistics and random-matrix references
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

from dotenv import load_dotenv

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import load_run_config
from models.errors import (
    CompletenessError,
    ConfigError,
    GenerationError,
    SpectralError,
    StorageError,
)
from models.schemas import APP_VERSION, ErrorResponse, RunSummary
from services.experiments import ExperimentRunner

# Load environment variables
load_dotenv()

# Configure logging
logging.basicConfig(
    level=getattr(logging, os.getenv("LOG_LEVEL", "INFO")),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_COMPLETENESS = 3
EXIT_SELF_CHECK = 4
EXIT_IO = 5

EXIT_CODES = {
    ConfigError: EXIT_CONFIG,
    CompletenessError: EXIT_COMPLETENESS,
    GenerationError: EXIT_SELF_CHECK,
    StorageError: EXIT_IO,
}

COMMANDS = ("spectrum", "analyze", "sweep", "perturb-check", "rmt-table", "selftest")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with RunConfig fields")
    common.add_argument("--output", help="Output directory")
    common.add_argument("--roots", type=int, help="Number of roots N")
    common.add_argument("--alpha", help="Coupling: value, comma list or start:stop:step")
    common.add_argument("--n", type=int, help="Number of point interactions (prime positions)")
    common.add_argument("--topology", choices=["circle", "segment"])
    common.add_argument("--threads", type=int, help="Worker cap for parallel windows")
    common.add_argument("--seed", type=int, help="Seed for Monte-Carlo subcommands")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(
        prog="spectra",
        description="Spectra and level-spacing statistics of point interactions on a circle or segment",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = commands.add_parser(name, parents=[common])
        if name == "analyze":
            sub.add_argument("--roots-file", help="Analyze a roots table instead of solving")
        if name == "sweep":
            sub.add_argument("--sweep-over", choices=["alpha", "n"])
            sub.add_argument("--n-values", help="Comma list of n for --sweep-over n")
        if name == "perturb-check":
            sub.add_argument("--levels", type=int, help="Number of doublets J")
        if name == "rmt-table":
            sub.add_argument("--accuracy", type=float, help="Target accuracy of the GOE table")
            sub.add_argument("--table", help="Output path of the GOE table")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    return {
        "output": args.output,
        "roots": args.roots,
        "alpha": args.alpha,
        "n": args.n,
        "topology": args.topology,
        "threads": args.threads,
        "seed": args.seed,
        "sweep_over": getattr(args, "sweep_over", None),
        "n_values": getattr(args, "n_values", None),
        "perturb_levels": getattr(args, "levels", None),
        "rmt_accuracy": getattr(args, "accuracy", None),
        "goe_table": getattr(args, "table", None),
    }


def run(args: argparse.Namespace) -> RunSummary:
    config = load_run_config(args.config, _overrides(args))
    runner = ExperimentRunner(config)
    if args.command == "spectrum":
        return runner.cmd_spectrum()
    if args.command == "analyze":
        return runner.cmd_analyze(args.roots_file)
    if args.command == "sweep":
        return runner.cmd_sweep()
    if args.command == "perturb-check":
        return runner.cmd_perturb_check()
    if args.command == "rmt-table":
        return runner.cmd_rmt_table()
    return runner.selftest()


def _report_error(exc: Exception, code: str, details: Optional[Dict] = None) -> None:
    response = ErrorResponse(error=str(exc), error_code=code, details=details)
    print(response.model_dump_json(), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        summary = run(args)
    except SpectralError as exc:
        logger.error(f"{args.command} failed: {exc.message}")
        _report_error(exc, exc.error_code, exc.details)
        return next((code for kind, code in EXIT_CODES.items() if isinstance(exc, kind)), EXIT_ERROR)
    except OSError as exc:
        logger.error(f"{args.command} failed: {exc}")
        _report_error(exc, StorageError.error_code)
        return EXIT_IO
    except Exception as exc:
        logger.error(f"Unhandled exception: {exc}", exc_info=True)
        _report_error(exc, "INTERNAL_ERROR")
        return EXIT_ERROR

    if summary.selftest and not all(check.passed for check in summary.selftest):
        return EXIT_SELF_CHECK
    logger.info(f"{args.command} completed; outputs in {summary.config.get('output')}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
