"""Hot-kernel backend selection.

The compiled Cython extension is preferred when present; the numpy fallback
is always available. Set ``SSPE_PURE_PYTHON=1`` to force the fallback (used
by the cross-backend parity tests and the benchmark).
"""

import os

from . import _pure

if os.environ.get("SSPE_PURE_PYTHON"):
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"

HULL_EPS = _pure.HULL_EPS
hull_lattice_mask = _impl.hull_lattice_mask
batch_line_intersections = _impl.batch_line_intersections
hypothesis_inlier_counts = _impl.hypothesis_inlier_counts
ray_inlier_mask = _impl.ray_inlier_mask
triplet_terms = _impl.triplet_terms
triplet_grad = _impl.triplet_grad

__all__ = [
    "BACKEND",
    "HULL_EPS",
    "hull_lattice_mask",
    "batch_line_intersections",
    "hypothesis_inlier_counts",
    "ray_inlier_mask",
    "triplet_terms",
    "triplet_grad",
]
