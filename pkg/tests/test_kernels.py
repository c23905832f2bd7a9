import os
import subprocess
import sys

import numpy as np
import pytest

from penalimit import _kernels_py, kernels

compiled = pytest.importorskip("penalimit._kernels")


def _inputs(seed, nc=7, nq=9, nl=4, nf=5, nqf=3):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((nc, nq, 2, 2))
    cell = (rng.random(nq), rng.standard_normal((nq, nl)), rng.standard_normal((nq, nl, 2)),
            a + a.transpose(0, 1, 3, 2), rng.standard_normal((nc, nq, 2)), rng.random(nc))
    face = (rng.random(nqf), rng.standard_normal((nf, nqf, 2 * nl)), rng.standard_normal((nf, nqf, 2 * nl)),
            rng.random((nf, nqf)), rng.standard_normal((nf, nqf)), rng.standard_normal((nf, nqf, 2 * nl)),
            rng.standard_normal((nf, nqf, 2 * nl)), rng.random(nf))
    return cell, face


@pytest.mark.parametrize("seed", range(4))
def test_backends_agree(seed):
    cell, face = _inputs(seed)
    for name, args in (("transport_cell_blocks", cell), ("transport_face_blocks", face)):
        ref = getattr(kernels, name)(*args, impl=_kernels_py)
        out = getattr(kernels, name)(*args, impl=compiled)
        for a, b in zip(ref, out):
            np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-13)


def test_compiled_is_default():
    assert kernels.BACKEND == "cython"


def test_pure_python_switch():
    env = dict(os.environ, PENALIMIT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import penalimit; print(penalimit.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
