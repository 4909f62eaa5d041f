import io
import logging
import sys
from pathlib import Path

from pointnls import APPLICATION_PATH

DEFAULT_FORMAT = "%(asctime)s:%(levelname)s:%(name)s:%(lineno)d:%(message)s"


class _BelowWarning(logging.Filter):
    """Pass only records that stay on stdout."""

    def filter(self, record: logging.LogRecord) -> bool:
        return record.levelno < logging.WARNING


def rotated_log_paths(project_name: str, logging_dir: Path, iterations: int) -> list[Path]:
    """
    Current log file followed by its numbered predecessors.

    :param project_name: log file stem
    :param logging_dir: directory holding the logs
    :param iterations: number of old logs kept
    :return: [<name>.log, <name>_1.log, ..., <name>_<iterations>.log]
    """

    return [logging_dir / f"{project_name}.log"] + [
        logging_dir / f"{project_name}_{i}.log" for i in range(1, iterations + 1)
    ]


def _rotate(paths: list[Path]) -> None:
    if len(paths) == 1:
        paths[0].unlink(missing_ok=True)
        return
    paths[-1].unlink(missing_ok=True)
    for newer, older in zip(reversed(paths[:-1]), reversed(paths[1:])):
        if newer.exists():
            newer.rename(older)


def create_log(project_name: str = "pointnls", logging_dir: Path = APPLICATION_PATH,
               file_level: int = logging.DEBUG, console_level: int = logging.INFO, iterations: int = 3,
               mode: str = "w", fmt: str = DEFAULT_FORMAT) -> logging.Logger:
    """
    Configure the root logger for a pointnls run.

    The previous logs are rotated, the file handler records everything at ``file_level`` and
    the console gets INFO/DEBUG on stdout and WARNING and above on stderr. Python warnings
    (for example the small-σ hypothesis flag) are routed into the log as well.

    Log levels: CRITICAL, ERROR, WARNING, INFO, DEBUG, NOTSET

    :param project_name: Name used for the log file. (Default: "pointnls")
    :param logging_dir: Directory to save log files. (Default: APPLICATION_PATH)
    :param file_level: Logging level for the log file.
    :param console_level: Logging level for the console.
    :param iterations: Number of old log files to keep.
    :param mode: Mode to open the log file. (Default: "w")
    :param fmt: Log record format.
    :return: the configured root logger
    """

    root_logger = logging.getLogger()
    root_logger.handlers.clear()

    logging_dir = Path(logging_dir)
    logging_dir.mkdir(parents=True, exist_ok=True)
    _rotate(rotated_log_paths(project_name, logging_dir, iterations))

    logging.basicConfig(
        filename=logging_dir / f"{project_name}.log",
        level=min(file_level, console_level),
        format=fmt,
        filemode=mode,
        force=True,
    )
    root_logger.handlers[0].setLevel(file_level)

    try:
        sys.stdout.reconfigure(line_buffering=True)
    except (AttributeError, io.UnsupportedOperation):
        pass

    stdout_hdlr = logging.StreamHandler(sys.stdout)
    stdout_hdlr.setLevel(console_level)
    stdout_hdlr.addFilter(_BelowWarning())
    stderr_hdlr = logging.StreamHandler(sys.stderr)
    stderr_hdlr.setLevel(max(console_level, logging.WARNING))

    root_logger.addHandler(stdout_hdlr)
    root_logger.addHandler(stderr_hdlr)
    logging.captureWarnings(True)
    return root_logger
