"""Automatic choice of the continuous region from face jump indicators.

A fully discontinuous step is solved, every face gets the indicator
``|[c]|_{L2(e)}``, and a cell joins the continuous region when all of its
faces are below the tolerance.  The region is held for ``period - 1``
steps, then the next step is again fully discontinuous.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import RegionPartition


@dataclass(frozen=True)
class AdaptPolicy:
    tol: float
    period: int = 5
    enabled: bool = True
    include_boundary: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.period < 1:
            raise ValueError(f"period must be >= 1, got {self.period}")


def face_jump_indicator(tables, coeffs):
    """L2 norm of the jump on every face; the trace itself on boundary faces."""
    eta = np.zeros(tables.mesh.n_faces)
    plus, minus = tables.interior_traces(coeffs)
    eta[tables.fi] = np.sqrt(np.einsum("q,fq->f", tables.face_w, (plus - minus) ** 2))
    tb = tables.boundary_traces(coeffs)
    eta[tables.fb] = np.sqrt(np.einsum("q,fq->f", tables.face_w, tb ** 2))
    return eta


def select_region(mesh, eta, tol, include_boundary=False):
    """Cells whose faces all satisfy ``eta < tol`` become continuous."""
    ok = np.asarray(eta) < tol
    if not include_boundary:
        ok = ok | mesh.is_boundary
    cont = ok[mesh.cell_faces].all(axis=1)
    cont.setflags(write=False)
    return RegionPartition(mesh, cont)


def schedule(step, policy):
    """True when ``step`` (1-based) is a fully discontinuous step.

    Steps 1, period + 1, 2 period + 1, ... reset the region; a disabled policy
    resets every step, i.e. runs pure dG.
    """
    if not policy.enabled:
        return True
    return (step - 1) % policy.period == 0
