"""Kernel backend selection.

Prefers the compiled extension; falls back to the pure NumPy implementation
when the extension is unavailable or when CLOUDTRACK_PURE=1 is set.
"""

import os

from . import _pure

if os.environ.get("CLOUDTRACK_PURE") == "1":
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        BACKEND = "native"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"

cluster_labels = _impl.cluster_labels
radius_pairs = _impl.radius_pairs
