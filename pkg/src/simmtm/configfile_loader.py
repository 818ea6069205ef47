"""
Load a flat key=value run configuration file.

Parsed line by line:
- Blank lines and lines starting with `#` are skipped
- Each pair is split on the first `=`; surrounding whitespace is removed
- A leading `export ` on the key is ignored
- Matched leading/trailing single or double quotes are stripped from values
- Keys are dotted `section.key` names (`mask.ratio=0.5`); top-level keys
  such as `seed` have no section

Any other non-empty line is a ConfigError naming its line number.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Any

from simmtm.exceptions import ConfigError
from simmtm.loader import Loader

RE_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")


class ConfigFileLoader(Loader):
    """Load a run configuration file"""

    RE_LTQUOTES = re.compile(r"([\"'])(.*)\1$|^(.*)$")
    EXPORT_PREFIX = r"^\s*?export\s"

    source = "config file"
    logger = logging.getLogger(__name__)

    def __init__(self, filename: str | Path) -> None:
        """
        Args:
            filename: Path of the configuration file.
        """
        super().__init__()
        self._filename = Path(filename)

    def _load_values(self, **kwargs: Any) -> bool:
        self.logger.debug("Reading config from '%s'", self._filename)
        try:
            text = self._filename.read_text(encoding="utf-8")
        except FileNotFoundError:
            return False
        self.parse_config(text)
        return True

    def parse_config(self, text: str) -> None:
        """Parses file content into key/value pairs."""
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.strip().startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{self._filename}:{number}: expected key=value, got '{line.strip()}'")
            key, value = line.split("=", 1)
            key = self.strip_export(key).strip()
            if not RE_KEY.match(key):
                raise ConfigError(f"{self._filename}:{number}: invalid key '{key}'")
            self._loaded_values[key] = self.remove_lt_quotes(value.strip())

    def remove_lt_quotes(self, in_: str) -> str:
        """Removes matched leading and trailing single / double quotes"""
        m = self.RE_LTQUOTES.match(in_)
        return m.group(2) if m and m.group(2) is not None and m.group(1) else in_

    def strip_export(self, in_: str) -> str:
        """Removes leading 'export ' prefix, case agnostic"""
        return re.sub(self.EXPORT_PREFIX, "", in_, flags=re.IGNORECASE)
