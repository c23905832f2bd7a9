"""Element kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``PENALIMIT_PURE_PYTHON=1`` to force the numpy path.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("PENALIMIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py


def _c(a):
    return np.ascontiguousarray(a, dtype=float)


def transport_cell_blocks(w, phi, dphi, D, u, qsum, impl=None):
    impl = impl or _impl
    return impl.transport_cell_blocks(_c(w), _c(phi), _c(dphi), _c(D), _c(u), _c(qsum))


def transport_face_blocks(wf, jmp, avg, m, beta, up, down, ms, impl=None):
    impl = impl or _impl
    return impl.transport_face_blocks(_c(wf), _c(jmp), _c(avg), _c(m), _c(beta), _c(up),
                                      _c(down), _c(ms))
