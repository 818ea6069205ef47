"""
Load SIMMTM_* environment variables as configuration fallbacks.

`SIMMTM_SEED` becomes `seed`; a double underscore separates the section,
so `SIMMTM_MASK__RATIO` becomes `mask.ratio`.
"""

from __future__ import annotations

import logging
import os
from typing import Any

from simmtm.loader import Loader

PREFIX = "SIMMTM_"


def environ_key(name: str) -> str:
    return name[len(PREFIX) :].lower().replace("__", ".")


class EnvironLoader(Loader):
    """Load SIMMTM_ prefixed environ values"""

    source = "environ"
    logger = logging.getLogger(__name__)

    def _load_values(self, **kwargs: Any) -> bool:
        names = sorted(name for name in os.environ if name.startswith(PREFIX))
        self.logger.debug("Reading %s SIMMTM environ variables", len(names))
        self._loaded_values.update({environ_key(name): os.environ[name] for name in names})
        return True
