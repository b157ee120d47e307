"""Grid kernels: compiled extension when available, pure-Python otherwise.

Set FLEETMUX_PURE_KERNELS=1 to force the fallback (used by the parity tests
and the benchmark). Both backends are bit-identical by construction.
"""

import os

if os.environ.get("FLEETMUX_PURE_KERNELS"):
    from fleetmux.kernels import pure as _impl

    BACKEND = "pure"
else:
    try:
        from fleetmux.kernels import _gridcore as _impl

        BACKEND = "compiled"
    except ImportError:
        from fleetmux.kernels import pure as _impl

        BACKEND = "pure"

integrate_scan = _impl.integrate_scan
inflate = _impl.inflate
points_all_free = _impl.points_all_free
frontier_mask = _impl.frontier_mask
reachable_mask = _impl.reachable_mask
line_of_sight = _impl.line_of_sight

__all__ = [
    "BACKEND",
    "integrate_scan",
    "inflate",
    "points_all_free",
    "frontier_mask",
    "reachable_mask",
    "line_of_sight",
]
