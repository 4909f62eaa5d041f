import logging
import os
import sys
from pathlib import Path
from typing import Generator, Sequence

logger = logging.getLogger(__name__)

# Application Path
if getattr(sys, "frozen", False):
    APPLICATION_PATH = Path(sys.executable).parent
else:
    APPLICATION_PATH = Path().absolute()

THREADS_ENV = "POINTNLS_THREADS"


class PointNLSError(Exception):
    """Base class for every error raised by pointnls."""


def divide_chunks(seq: Sequence, size: int) -> Generator:
    """
    Divide a sequence (list or array) into consecutive chunks of ``size``

    :param seq: sequence to split
    :param size: chunk length, the last chunk may be shorter
    :return: Generator
    """

    for i in range(0, len(seq), size):
        yield seq[i : i + size]


def worker_count() -> int:
    """
    Number of workers for parallel sweeps, capped by ``POINTNLS_THREADS``.

    :return: positive worker count
    """

    available = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return available
    try:
        cap = int(raw)
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r", THREADS_ENV, raw)
        return available
    return max(1, min(cap, available))
