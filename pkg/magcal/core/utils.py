"""
Logging setup and small helpers shared across magcal.
"""
import os
import logging
import numpy as np


LOG_FORMAT = "%(levelname)7s: %(message)s"
DEBUG_FORMAT = "%(name)s - %(levelname)s: %(message)s"


def _file_handler(filename, level, fmt):
    if os.name == "nt":
        # FileHandler on windows chokes on utf-8 chars in messages
        handler = logging.StreamHandler(open(filename, mode="w", encoding="utf-8"))
    else:
        handler = logging.FileHandler(filename, mode="w")
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(fmt))
    return handler


def debug_filename(filename):
    """'magcal.log' -> 'magcal.debug.log'"""
    base, ext = os.path.splitext(filename)
    return base + ".debug" + (ext or ".log")


def configure_logger(name, filename="magcal.log", verbosity=logging.INFO):
    """Parent logger: `verbosity` on the console, INFO to `filename` and
    DEBUG to its '.debug' sibling."""
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)
    # avoids duplicate lines under ipython
    logger.propagate = False
    console = logging.StreamHandler()
    console.set_name("console")
    console.setLevel(verbosity)
    console.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(_file_handler(filename, logging.INFO, LOG_FORMAT))
    logger.addHandler(_file_handler(debug_filename(filename), logging.DEBUG, DEBUG_FORMAT))
    logger.addHandler(console)
    return logger


def get_logger(name, filename=None, verbosity=logging.INFO):
    """Return a named logger with file and console handlers.

    The parent logger is the first component of `name` ('magcal' for
    'magcal.core.ekf'). If the parent has no handlers yet, it is configured
    with a console handler at `verbosity` and INFO/DEBUG file handlers
    writing to `filename` and its '.debug' sibling.
    A console verbosity change is applied to an already configured parent.
    """
    parent = name.split(".")[0]
    if filename is None:
        filename = parent + ".log"
    parent_logger = logging.getLogger(parent)
    if not parent_logger.handlers:
        configure_logger(parent, filename, verbosity)
    else:
        for handler in parent_logger.handlers:
            if handler.get_name() == "console":
                handler.setLevel(verbosity)
    return logging.getLogger(name)


def arr2s(aa, precision=4, suppress_small=True, max_line_width=75):
    """Helper for compact string representation of numpy arrays."""
    ss = np.array2string(
        np.asarray(aa),
        precision=precision,
        suppress_small=suppress_small,
        max_line_width=max_line_width,
    )
    return ss


def tolist(obj):
    """Recursively convert numpy arrays and scalars to plain python types.

    Used before json serialisation of results.
    """
    if isinstance(obj, dict):
        return {key: tolist(val) for key, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [tolist(val) for val in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
