"""Hot kernels, compiled when available.

The compiled module is preferred; set ``DELAYWAVE_PURE_PYTHON=1`` to force
the numpy fallback.
"""

import os

from . import _fallback

BACKEND = "python"
wave_window = _fallback.wave_window
upwind_shift = _fallback.upwind_shift

if not os.environ.get("DELAYWAVE_PURE_PYTHON"):
    try:
        from . import _wave
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        wave_window = _wave.wave_window
        upwind_shift = _wave.upwind_shift

__all__ = ["BACKEND", "wave_window", "upwind_shift"]
