"""``aphasia-graphs <stage> --config PATH [--seed N] [--out DIR]``

Exit codes: 0 ok, 1 unexpected, 2 config/usage, 3 missing prerequisite,
4 malformed input (CHAT or score sheet), 5 validation or join failure,
6 training or numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .chat import ChatParseError
from .config import ConfigError, load_config
from .evaluation import LeakageError, TooFewParticipantsError
from .gnn import DivergenceError
from .graph import EmptyTranscriptError
from .pipeline import STAGES, MissingPrerequisiteError, run_all, run_stage
from .scores import JoinError, ScoreSheetError, ScoreValidationError
from .stats import ConvergenceError

EXIT_OK, EXIT_UNEXPECTED, EXIT_CONFIG, EXIT_MISSING, EXIT_INPUT, EXIT_VALIDATION, EXIT_NUMERIC = range(7)

# order matters: subclasses before their bases
ERROR_CODES = (
    (ConfigError, EXIT_CONFIG),
    (MissingPrerequisiteError, EXIT_MISSING),
    (ScoreValidationError, EXIT_VALIDATION),
    (ChatParseError, EXIT_INPUT),
    (ScoreSheetError, EXIT_INPUT),
    (JoinError, EXIT_VALIDATION),
    (EmptyTranscriptError, EXIT_VALIDATION),
    (TooFewParticipantsError, EXIT_VALIDATION),
    (LeakageError, EXIT_VALIDATION),
    (DivergenceError, EXIT_NUMERIC),
    (ConvergenceError, EXIT_NUMERIC),
    (np.linalg.LinAlgError, EXIT_NUMERIC),
    (FloatingPointError, EXIT_NUMERIC),
)

log = logging.getLogger("aphasia_graphs.cli")


def exit_code(exc: BaseException) -> int:
    for cls, code in ERROR_CODES:
        if isinstance(exc, cls):
            return code
    return EXIT_UNEXPECTED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aphasia-graphs", description=__doc__.splitlines()[0])
    p.add_argument("stage", choices=STAGES + ("run-all",))
    p.add_argument("--config", help="JSON config; omitted keys keep their defaults")
    p.add_argument("--seed", type=int, help="override every seed in the config")
    p.add_argument("--out", default="runs/default", help="artifact directory (default: %(default)s)")
    p.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    return p


def setup_logging(level: str):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s level=%(levelname)s logger=%(name)s %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)
    logging.captureWarnings(True)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    setup_logging(args.log_level)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.with_seed(args.seed)
        if args.stage == "run-all":
            run_all(cfg, args.out, argv=["aphasia-graphs"] + argv)
        else:
            run_stage(args.stage, cfg, args.out, argv=["aphasia-graphs"] + argv)
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code
        code = exit_code(exc)
        if code == EXIT_UNEXPECTED:
            log.exception("unexpected error")
        else:
            log.error("failed error=%s detail=%s exit=%d", type(exc).__name__, exc, code)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
