"""Hot-kernel backend selection.

The compiled Cython kernels are preferred when importable; otherwise the
numpy fallbacks are used. Both implement the same contracts (and the
triangle fill with bit-identical arithmetic). Set
CUBEGT_BACKEND=python|compiled to force one; the benchmark and parity tests
import the modules directly instead.
"""

import os

from . import _core_py

_forced = os.environ.get("CUBEGT_BACKEND")

if _forced == "python":
    _impl = _core_py
elif _forced == "compiled":
    from . import _core_cy as _impl
else:
    try:
        from . import _core_cy as _impl
    except ImportError:
        _impl = _core_py

fill_triangles = _impl.fill_triangles
count_box_pair = _impl.count_box_pair
clip_cut_rays = _impl.clip_cut_rays
BACKEND_NAME = _impl.BACKEND_NAME


def available_backends():
    backends = {"python": _core_py}
    try:
        from . import _core_cy

        backends["compiled"] = _core_cy
    except ImportError:
        pass
    return backends
