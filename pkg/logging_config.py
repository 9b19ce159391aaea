import logging
from logging.handlers import RotatingFileHandler
from os import makedirs
from os.path import join as join_path

from config import config_


LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
# one rotating file per subsystem logger
LOGGERS = {
    "training": "training.log",
    "sampler": "sampler.log",
    "evaluation": "evaluation.log",
    "cli": "cli.log",
}


def _rotating_handler(file_name: str, level: int) -> RotatingFileHandler:
    handler = RotatingFileHandler(
        join_path(config_.LOG_DIR, file_name),
        maxBytes=5 * 1024 * 1024,
        backupCount=5,
        encoding="utf-8"
    )
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    return handler


def setup_logging(level: str | None = None, echo: bool = True) -> None:
    """
    Attach a RotatingFileHandler to each subsystem logger. Library modules only call
    logging.getLogger(<name>); this is called once by the CLI entry point.
    The cli logger additionally echoes to stderr when <echo> is True.
    """
    makedirs(config_.LOG_DIR, exist_ok=True)
    # root logger stays quiet
    logging.basicConfig(level=logging.ERROR)
    log_level = logging.getLevelName((level or config_.LOG_LEVEL).upper())
    if not isinstance(log_level, int):
        log_level = logging.INFO

    for name, file_name in LOGGERS.items():
        logger = logging.getLogger(name)
        if any(isinstance(h, RotatingFileHandler) for h in logger.handlers):
            continue  # already configured in this process
        logger.setLevel(log_level)
        logger.addHandler(_rotating_handler(file_name, log_level))
        logger.propagate = False

    if echo:
        cli_logger = logging.getLogger("cli")
        if not any(type(h) is logging.StreamHandler for h in cli_logger.handlers):
            console = logging.StreamHandler()
            console.setLevel(log_level)
            console.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
            cli_logger.addHandler(console)
