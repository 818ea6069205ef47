from __future__ import annotations

from simmtm.cli import main

raise SystemExit(main())
