"""Load `--section.key value` / `--section.key=value` command-line overrides."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import Any

from simmtm.configfile_loader import RE_KEY
from simmtm.exceptions import UsageError
from simmtm.loader import Loader


class OverrideLoader(Loader):
    """Load overrides left over after the fixed CLI flags were parsed"""

    source = "override"
    logger = logging.getLogger(__name__)

    def __init__(self, tokens: Sequence[str]) -> None:
        super().__init__()
        self._tokens = list(tokens)

    def _load_values(self, **kwargs: Any) -> bool:
        tokens = iter(self._tokens)
        for token in tokens:
            if not token.startswith("--") or len(token) == 2:
                raise UsageError(f"unexpected argument '{token}'")
            key, sep, value = token[2:].partition("=")
            if not sep:
                try:
                    value = next(tokens)
                except StopIteration:
                    raise UsageError(f"override '{token}' has no value") from None
            if not RE_KEY.match(key):
                raise UsageError(f"unknown flag '{token}'")
            self._loaded_values[key] = value
        return bool(self._tokens)
