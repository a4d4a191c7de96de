"""Selects the compiled kernels when available, else the pure-Python ones.

Set ``DELAYOPT_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py as python_backend

compiled_backend = None
if os.environ.get("DELAYOPT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_backend  # type: ignore[no-redef]
    except ImportError:
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND_NAME = "compiled" if compiled_backend is not None else "python"

__all__ = ["backend", "python_backend", "compiled_backend", "BACKEND_NAME"]
