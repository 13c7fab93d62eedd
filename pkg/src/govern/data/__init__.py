"""govern data files

.. autofunction:: load
.. automethod:: load.readable
.. automethod:: load.cached

.. autoclass:: Loader
"""

from __future__ import annotations

import atexit
import json
from contextlib import ExitStack
from functools import cache
from pathlib import Path
from types import ModuleType
from typing import TYPE_CHECKING

try:  # Prefer backport to leave consistency to dependency spec
    from importlib_resources import as_file, files
except ImportError:
    from importlib.resources import as_file, files  # type: ignore

if TYPE_CHECKING:
    try:  # Prefer stdlib so Sphinx can link to authoritative documentation
        from importlib.resources.abc import Traversable
    except ImportError:  # Python 3.10
        from importlib.abc import Traversable

__all__ = ['load', 'default_settings']


class Loader:
    """A loader for package files relative to a module.

    Resources are read in place when possible; zipped distributions are unpacked into a
    temporary directory that is removed when the interpreter exits.

    Expected usage::

        from govern.data import load
        settings = json.loads(load.readable('default_config.json').read_text())
        with_path = load('tests', 'config.json')

    """

    def __init__(self, anchor: str | ModuleType):
        self._anchor = anchor
        self.files = files(anchor)
        self.exit_stack = ExitStack()
        atexit.register(self.exit_stack.close)

    def readable(self, *segments) -> Traversable:
        """Provide read access to a resource through a Path-like interface."""
        return self.files.joinpath(*segments)

    @cache  # noqa: B019
    def cached(self, *segments) -> Path:
        """Ensure data is available as a :class:`~pathlib.Path` until Python exits."""
        return self.exit_stack.enter_context(as_file(self.files.joinpath(*segments)))

    __call__ = cached


load = Loader(__package__)


def default_settings() -> dict:
    """The packaged default run configuration, as a dictionary of sections."""
    return json.loads(load.readable('default_config.json').read_text())
