"""Compare the compiled and numpy transport element kernels.

    python3 benchmarks/bench_kernels.py [--n 16] [--repeat 20]

Prints the median time per call of each kernel on a realistic miscible
displacement step and the largest entrywise difference between backends.
"""
import argparse
import statistics
import time

import numpy as np

from penalimit import _kernels_py, kernels
from penalimit.darcy import ImdParams
from penalimit.transport import ImdModel, dispersion


def kernel_inputs(n, r):
    model = ImdModel(ImdParams(n=n, r=r))
    state = model.darcy.solve(np.zeros(model.dofmap.n_dofs))
    t = model.tables
    u_cell, u_plus, u_minus = model.velocity_data(state)
    p = model.params
    rng = np.random.default_rng(0)
    cell = (t.cell_w, t.phi, t.dphi, dispersion(u_cell, p), u_cell, model.q_in + model.q_out)
    nf, nq, nl2 = t.interior_jump_basis().shape
    face = (t.face_w, t.interior_jump_basis(), rng.standard_normal((nf, nq, nl2)),
            rng.random((nf, nq)), rng.standard_normal((nf, nq)),
            rng.standard_normal((nf, nq, nl2)), rng.standard_normal((nf, nq, nl2)),
            rng.random(nf))
    return cell, face


def median_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--r", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    cell, face = kernel_inputs(args.n, args.r)
    try:
        from penalimit import _kernels
    except ImportError:
        print("compiled kernels not built; only the numpy backend is available")
        _kernels = None
    print(f"n={args.n} r={args.r} active backend: {kernels.BACKEND}")
    for name, args_ in (("transport_cell_blocks", cell), ("transport_face_blocks", face)):
        py = median_time(lambda *a: getattr(kernels, name)(*a, impl=_kernels_py), args_, args.repeat)
        line = f"{name:24s} numpy {1e3 * py:8.3f} ms"
        if _kernels is not None:
            cy = median_time(lambda *a: getattr(kernels, name)(*a, impl=_kernels), args_, args.repeat)
            ref = getattr(kernels, name)(*args_, impl=_kernels_py)
            out = getattr(kernels, name)(*args_, impl=_kernels)
            diff = max(float(np.max(np.abs(a - b))) for a, b in zip(ref, out))
            line += f"  cython {1e3 * cy:8.3f} ms  speedup {py / cy:5.1f}x  max diff {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
