"""Inner-loop kernels with a compiled backend and a numpy fallback.

The Cython extension ``_core`` is used when it imports; otherwise, or when
``MESOML_PURE_PYTHON=1`` is set, the functions come from ``_pure``.
"""

import os

from . import _pure

_force_pure = os.environ.get("MESOML_PURE_PYTHON", "").strip() not in ("", "0")

if _force_pure:
    _impl = _pure
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pure
        BACKEND = "python"

sgd_epoch = _impl.sgd_epoch
pegasos_run = _impl.pegasos_run
voted_perceptron = _impl.voted_perceptron
best_split = _impl.best_split
tree_apply = _impl.tree_apply
grow_tree = _impl.grow_tree
column_ranks = _impl.column_ranks
oob_permutation_correct = _impl.oob_permutation_correct
mlp_epoch = _impl.mlp_epoch


def backends():
    """Map of available backend name -> kernel module."""
    out = {"python": _pure}
    try:
        from . import _core
    except ImportError:
        pass
    else:
        out["cython"] = _core
    return out
