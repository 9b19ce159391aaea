import logging

from cli.messages import format_checks, msgs_verify
from cli.workspace import VERIFY_DIR, Workspace
from errors import VerificationError
from oracle.checks import run_checks


logger = logging.getLogger("cli")


def register(subparsers, common) -> None:
    parser = subparsers.add_parser("verify-oracle", parents=[common], help="run the operator, transport, oracle and gradient checks")
    parser.set_defaults(handler=handle)


def handle(args, ws: Workspace) -> None:
    results = run_checks(ws.cfg.seed)
    ws.store(VERIFY_DIR).write_csv("oracle_checks.csv", ["check", "passed", "value", "tolerance"],
                                   [result.row() for result in results])
    logger.info("\n" + format_checks(results))
    failed = [result.name for result in results if not result.passed]
    logger.info(msgs_verify['summary'].format(passed=len(results) - len(failed), total=len(results)))
    if failed:
        raise VerificationError(f"failed checks: {', '.join(failed)}")
