"""Backend selection for the MCMC kernels.

The compiled ``_core`` extension is used when importable; set
``BAYESTAGE_PURE_PYTHON=1`` to force the pure-Python implementation.
"""
import os

import numpy as np

from . import _pycore

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

BACKENDS = {"python": _pycore}
if _core is not None:
    BACKENDS["cython"] = _core

if os.environ.get("BAYESTAGE_PURE_PYTHON") or _core is None:
    DEFAULT = "python"
else:
    DEFAULT = "cython"


def get(name=None):
    name = name or DEFAULT
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


def run(labels, counts, W, log_kappa, a, U, keep, out, gibbs=True, split=True, backend=None):
    """Advance ``labels`` (int64 array, in place) through ``len(U)`` iterations."""
    return get(backend).run(
        labels,
        np.ascontiguousarray(counts, dtype=np.int64),
        np.ascontiguousarray(W, dtype=np.float64),
        float(log_kappa),
        float(a),
        np.ascontiguousarray(U, dtype=np.float64),
        np.ascontiguousarray(keep, dtype=np.uint8),
        out,
        gibbs,
        split,
    )
