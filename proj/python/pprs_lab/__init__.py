"""Pipelined smoothed-gradient optimization lab.

Thin Python face of the C++ core: benchmark objectives, the randomized
smoothing estimator, pipeline schedules with simulated-time accounting, the
accelerated smoothed optimizer with its gd/agd baselines, and the experiment
runner behind the ``pprs_bench`` CLI.
"""

try:
    from pprs_lab._core import *  # noqa: F401,F403  (installed layout)
    from pprs_lab import _core as _core_module
except ImportError:  # build-tree layout: _core.so next to the build dir
    from _core import *  # noqa: F401,F403
    import _core as _core_module

__all__ = [name for name in dir(_core_module) if not name.startswith("_")]
__version__ = "0.1.0"
