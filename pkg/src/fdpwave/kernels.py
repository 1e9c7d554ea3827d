"""Backend selection for the hot kernels.

The compiled extension is preferred.  Setting ``FDPWAVE_PURE_PYTHON=1``
forces the numpy fallback, which is also used when the extension was not
built.  ``BACKEND`` records the choice.
"""
from __future__ import annotations

import logging
import os

from . import _fallback

logger = logging.getLogger(__name__)

_impl = _fallback
BACKEND = "numpy"
if os.environ.get("FDPWAVE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build environment
        logger.debug("compiled kernels unavailable, using numpy fallback")
        _impl = _fallback

scatter_level = _impl.scatter_level
gather_level = _impl.gather_level
design_level = _impl.design_level
simplex_solve = _impl.simplex_solve

OPTIMAL = _fallback.OPTIMAL
INFEASIBLE = _fallback.INFEASIBLE
UNBOUNDED = _fallback.UNBOUNDED
ITERATION_LIMIT = _fallback.ITERATION_LIMIT
NUMERICAL = _fallback.NUMERICAL

__all__ = [
    "BACKEND",
    "scatter_level",
    "gather_level",
    "design_level",
    "simplex_solve",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "ITERATION_LIMIT",
    "NUMERICAL",
]
