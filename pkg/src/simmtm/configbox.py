"""Layered run configuration: later loaders win over earlier ones."""

from __future__ import annotations

import logging

from simmtm.loader import Loader


class ConfigBox:
    """Collects flat configuration values from a sequence of loaders"""

    _logger = logging.getLogger(__name__)

    def __init__(self, *, debug_flag: bool = False) -> None:
        """
        Initialize ConfigBox

        Keyword Args:
            debug_flag: When true, internal logger level is set to DEBUG
        """
        self._logger.setLevel(level="DEBUG" if debug_flag else "INFO")
        self._logger.debug("Debug flag passed.")

        self._loaded_values: dict[str, str] = {}
        self._origins: dict[str, str] = {}

    @property
    def values(self) -> dict[str, str]:
        """Property: loaded values."""
        return self._loaded_values.copy()

    def use_loaders(self, *loaders: Loader) -> None:
        """
        Run loaders in order; a key set by a later loader replaces the earlier value.

        Args:
            loaders: Variable length argument list of Loaders to execute.
        """
        for loader in loaders:
            if not loader.run():
                self._logger.debug("Loader %s found no source", loader.source)
            for key, value in loader.values.items():
                if key in self._loaded_values and self._loaded_values[key] != value:
                    self._logger.debug("%s overrides %s for %s", loader.source, self._origins[key], key)
                self._loaded_values[key] = value
                self._origins[key] = loader.source

    def origin(self, key: str) -> str | None:
        """Name of the loader that supplied key, None if unset."""
        return self._origins.get(key)

    def set(self, key: str, value: object, source: str = "flag") -> None:  # noqa: A003
        """Set a value by key. Will be converted to string."""
        self._loaded_values[key] = str(value)
        self._origins[key] = source

    def log_origins(self) -> None:
        """One debug line per key: value and the loader it came from."""
        for key in sorted(self._loaded_values):
            self._logger.debug("config %s=%s (%s)", key, self._loaded_values[key], self.origin(key))
