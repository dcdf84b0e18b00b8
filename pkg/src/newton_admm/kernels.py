"""Kernel backend selection.

The compiled extension ``newton_admm._core`` is used when it imports, the
numpy module ``newton_admm._pykernels`` otherwise. Set
``NEWTON_ADMM_KERNELS=python`` (or ``compiled``) to force a choice; forcing
``compiled`` when the extension is missing raises ImportError.
"""
import logging
import os
from contextlib import contextmanager

from . import _pykernels

logger = logging.getLogger(__name__)

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

_BACKENDS = {"python": _pykernels}
if _core is not None:
    _BACKENDS["compiled"] = _core


def available():
    """Names of the importable backends."""
    return sorted(_BACKENDS)


def _resolve(name):
    if name == "auto":
        return _core if _core is not None else _pykernels
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ImportError(f"kernel backend {name!r} unavailable; have {available()}") from None


_active = _resolve(os.environ.get("NEWTON_ADMM_KERNELS", "auto"))
logger.debug("kernel backend: %s", _active.NAME)


def active():
    """The backend module currently in use."""
    return _active


def backend_name():
    return _active.NAME


def set_backend(name):
    """Switch backend process-wide; returns the previous backend name."""
    global _active
    previous = _active.NAME
    _active = _resolve(name)
    return previous


@contextmanager
def use_backend(name):
    previous = set_backend(name)
    try:
        yield _active
    finally:
        set_backend(previous)
