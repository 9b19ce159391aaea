import argparse
import logging
import sys
import time

from pydantic import ValidationError

from cli import handler_evaluate, handler_gen_data, handler_reconstruct, handler_train, handler_verify
from cli.messages import msgs_run
from cli.run_config import RunConfig, load_run_config
from cli.workspace import Workspace
from config import config_
from database import get_registry
from errors import MPFlowError, NonFiniteError, VerificationError
from logging_config import setup_logging


logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFICATION = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    # usage errors map to exit code 1 instead of argparse's 2
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="mpflow", description="Multi-modal prior flow reconstruction pipeline")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="run config file (key=value); defaults apply when omitted")
    common.add_argument("--out", default=None, help="override output_dir from the config")
    common.add_argument("--force", action="store_true", help="overwrite existing artifacts")
    common.add_argument("--threads", type=int, default=config_.THREADS, help="cap on candidate worker processes")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")

    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)
    for handler in (handler_gen_data, handler_train, handler_reconstruct, handler_evaluate, handler_verify):
        handler.register(subparsers, common)
    return parser


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, VerificationError):
        return EXIT_VERIFICATION
    if isinstance(exc, NonFiniteError):
        return EXIT_NUMERICAL
    return EXIT_USAGE


def _run_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if args.out:
        cfg = cfg.model_copy(update={"output_dir": args.out})
    if args.threads < 1:
        raise UsageError(f"--threads must be >= 1, got {args.threads}")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE

    setup_logging(args.log_level)
    try:
        cfg = _run_config(args)
    except (UsageError, MPFlowError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE

    registry = get_registry()
    run_id = registry.record_run(args.command, cfg.output_dir, cfg.seed)
    ws = Workspace(cfg, force=args.force, registry=registry, run_id=run_id, threads=args.threads)
    logger.info(msgs_run['start'].format(run_id=run_id, command=args.command, output_dir=cfg.output_dir,
                                         seed=cfg.seed))
    started = time.perf_counter()
    code = EXIT_OK
    try:
        ws.write_resolved_config()
        args.handler(args, ws)
    except (MPFlowError, ValidationError) as exc:
        code = exit_code_for(exc)
        logger.exception(msgs_run['failed'].format(run_id=run_id, command=args.command, code=code, error=exc))
    except Exception:
        registry.finish_run(run_id, EXIT_USAGE, time.perf_counter() - started)
        raise
    duration = time.perf_counter() - started
    registry.finish_run(run_id, code, duration)
    if code == EXIT_OK:
        logger.info(msgs_run['done'].format(run_id=run_id, command=args.command, seconds=duration))
    return code
