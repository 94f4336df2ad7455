import argparse
import logging
import sys
from pathlib import Path

from config import settings
from tasks.reporting import run

logging.basicConfig(level=settings.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=settings.app_name)
    commands = parser.add_subparsers(dest="command", required=True)
    run_parser = commands.add_parser("run", help="run one experiment config")
    run_parser.add_argument("config", type=Path)
    run_parser.add_argument("--out-dir", type=Path, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    report, status = run(args.config, args.out_dir)
    logger.info("%s finished with exit status %d", report.task or "run", status)
    return status


if __name__ == "__main__":
    sys.exit(main())
