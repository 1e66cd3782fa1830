"""Hot loops, compiled with numba when available.

Set ``OSCMAX_BACKEND=numpy`` to force the pure-numpy versions (useful when
numba is missing or for cross-checking). ``use_backend`` switches at runtime.
"""

import contextlib
import os
import sys

from . import _numpy

NAMES = (
    "box_min_scan",
    "box_absdev",
    "stamp_boxes",
    "dilate_boxes",
    "mask_stats",
    "mask_absdev",
    "stamp_masks",
    "rec_k2",
    "rec_blo_k3",
    "engulf_boxes",
    "smallest_cover",
)


def _load(name):
    if name == "numpy":
        return _numpy
    if name == "numba":
        from . import _numba

        return _numba
    raise ValueError(f"unknown kernel backend {name!r}; expected 'numba' or 'numpy'")


def _install(name):
    global BACKEND
    mod = _load(name)
    this = sys.modules[__name__]
    for fn in NAMES:
        setattr(this, fn, getattr(mod, fn))
    BACKEND = name


BACKEND = "numpy"
_wanted = os.environ.get("OSCMAX_BACKEND", "numba").strip().lower()
try:
    _install(_wanted)
except ImportError:
    _install("numpy")


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily route every kernel call through ``name``. Not thread-safe."""
    prev = BACKEND
    _install(name)
    try:
        yield
    finally:
        _install(prev)
