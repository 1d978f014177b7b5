"""Library logging for `daie`.

Every module logs through `get_logger(__name__)`, which hangs off a single `daie` root logger with its own stderr
handler. The level starts at `DAIE_VERBOSITY` (debug, info, warning, error or critical; warning if unset) and records
do not propagate to the application's root logger unless `enable_propagation()` is called.
"""

import logging
import os
import sys
import threading
from logging import CRITICAL, DEBUG, ERROR, INFO, WARNING  # NOQA
from typing import Optional

from tqdm import auto as tqdm_lib


__all__ = ['get_logger', 'get_verbosity', 'set_verbosity', 'set_verbosity_debug', 'set_verbosity_info',
           'set_verbosity_warning', 'set_verbosity_error', 'enable_propagation', 'disable_propagation', 'tqdm',
           'enable_progress_bar', 'disable_progress_bar', 'is_progress_bar_enabled']


LIBRARY = 'daie'
VERBOSITY_ENV = 'DAIE_VERBOSITY'
LEVELS = dict(debug=DEBUG, info=INFO, warning=WARNING, error=ERROR, critical=CRITICAL)

_lock = threading.Lock()
_handler: Optional[logging.Handler] = None
_progress = True


def _level_from_env() -> int:
    name = os.getenv(VERBOSITY_ENV, '').strip().lower()

    if not name:
        return WARNING

    if name not in LEVELS:
        logging.getLogger().warning(f'Ignoring {VERBOSITY_ENV}={name!r}; expected one of {", ".join(LEVELS)}')
        return WARNING

    return LEVELS[name]


def _root() -> logging.Logger:
    global _handler

    root = logging.getLogger(LIBRARY)

    with _lock:
        if _handler is None:
            _handler = logging.StreamHandler(sys.stderr)
            _handler.setFormatter(logging.Formatter('[%(levelname)s|%(name)s] %(message)s'))
            root.addHandler(_handler)
            root.setLevel(_level_from_env())
            root.propagate = False

    return root


def get_logger(name: Optional[str] = None) -> logging.Logger:
    root = _root()
    return root if name is None or name == LIBRARY else logging.getLogger(name)


def get_verbosity() -> int:
    return _root().getEffectiveLevel()


def set_verbosity(level: int) -> None:
    _root().setLevel(level)


def set_verbosity_debug():
    set_verbosity(DEBUG)


def set_verbosity_info():
    set_verbosity(INFO)


def set_verbosity_warning():
    set_verbosity(WARNING)


def set_verbosity_error():
    set_verbosity(ERROR)


def enable_propagation() -> None:
    """Let records reach the root logger, e.g. for pytest's `caplog`."""
    _root().propagate = True


def disable_propagation() -> None:
    _root().propagate = False


class _SilentBar:
    def __init__(self, iterable=None, *args, **kwargs):
        self.iterable = iterable

    def __iter__(self):
        return iter(self.iterable)

    def __getattr__(self, _):
        return lambda *args, **kwargs: None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def tqdm(*args, **kwargs):
    """`tqdm.auto.tqdm`, or a no-op stand-in while progress bars are disabled."""
    return tqdm_lib.tqdm(*args, **kwargs) if _progress else _SilentBar(*args, **kwargs)


def is_progress_bar_enabled() -> bool:
    return _progress


def enable_progress_bar():
    global _progress
    _progress = True


def disable_progress_bar():
    global _progress
    _progress = False
