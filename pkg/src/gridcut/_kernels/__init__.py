"""Kernel backend selection: compiled extension if available, else pure Python.

Set ``GRIDCUT_FORCE_PURE=1`` to insist on the fallback (used by the
benchmark suite to compare backends).  Both backends expose ``bfs_parents``,
``max_flow`` and ``reachable`` with identical semantics and bit-identical
float results.
"""

import os

from . import purepy

_compiled = None
if not os.environ.get("GRIDCUT_FORCE_PURE"):
    try:
        from . import _graphcore as _compiled
    except ImportError:
        _compiled = None

impl = _compiled if _compiled is not None else purepy
BACKEND = "compiled" if _compiled is not None else "pure-python"

bfs_parents = impl.bfs_parents
max_flow = impl.max_flow
reachable = impl.reachable


def available_backends() -> dict:
    """Name -> module for every importable backend (benchmarking helper)."""
    out = {"pure-python": purepy}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
