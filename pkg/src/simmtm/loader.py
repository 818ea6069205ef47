"""Base for the configuration sources layered by ConfigBox."""

from __future__ import annotations

import logging
from abc import ABC
from abc import abstractmethod
from typing import Any


class Loader(ABC):
    """
    A source of flat `section.key` -> text values.

    Subclasses fill `_loaded_values` in `_load_values` and report whether
    their source existed.
    """

    source = "loader"
    logger = logging.getLogger(__name__)

    def __init__(self) -> None:
        self._loaded_values: dict[str, str] = {}

    @property
    def values(self) -> dict[str, str]:
        """Copy of loaded values"""
        return self._loaded_values.copy()

    def run(self) -> bool:
        """Load values from the source. Returns False when the source is absent."""
        was_loaded = self._load_values()
        for key, value in self._loaded_values.items():
            self.logger.debug("%s: %s = %s", self.source, key, value)
        return was_loaded

    @abstractmethod
    def _load_values(self, **kwargs: Any) -> bool:
        """Load from source, store values with class instance."""
        raise NotImplementedError()
