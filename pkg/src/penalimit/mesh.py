"""Uniform square meshes of the unit square, face topology and region partitions.

Cells are numbered row-major, ``cell = j * n + i`` for column ``i`` and row
``j``.  Vertical faces come first (``j * (n + 1) + i``, the face at
``x = i / n``), then horizontal faces (``n * (n + 1) + j * n + i``, the face
at ``y = j / n``).

Every face stores a ``plus`` cell and the unit normal pointing out of it.
For interior faces the plus cell is the left (resp. lower) neighbour, so the
normal is ``(1, 0)`` or ``(0, 1)``.  Boundary faces have only a plus cell and
its outward normal.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .linalg import gauss_rule

# local face ids inside a cell
LEFT, RIGHT, BOTTOM, TOP = 0, 1, 2, 3
LOCAL_NORMALS = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])


class FlowClass(enum.IntEnum):
    INTERIOR = -1
    INFLOW = 0
    OUTFLOW = 1


def local_face_points(local_face, s):
    """Reference coordinates in [0, 1]^2 of the face parameter ``s``."""
    s = np.asarray(s, dtype=float)
    z, o = np.zeros_like(s), np.ones_like(s)
    return {
        LEFT: np.stack([z, s], axis=-1),
        RIGHT: np.stack([o, s], axis=-1),
        BOTTOM: np.stack([s, z], axis=-1),
        TOP: np.stack([s, o], axis=-1),
    }[int(local_face)]


@dataclass(frozen=True, eq=False)
class Mesh:
    n_per_side: int
    face_cells: np.ndarray    # (nf, 2) plus, minus (-1 on the boundary)
    face_local: np.ndarray    # (nf, 2) local face id on each side
    face_normal: np.ndarray   # (nf, 2) unit normal out of the plus cell
    cell_faces: np.ndarray    # (nc, 4) face ids ordered left, right, bottom, top

    @property
    def n(self):
        return self.n_per_side

    @property
    def side(self):
        """Cell side length (the experiments' ``h``)."""
        return 1.0 / self.n_per_side

    @property
    def cell_diameter(self):
        return np.sqrt(2.0) / self.n_per_side

    @property
    def n_cells(self):
        return self.n_per_side ** 2

    @property
    def n_faces(self):
        return len(self.face_cells)

    @cached_property
    def vertices(self):
        t = np.linspace(0.0, 1.0, self.n + 1)
        xx, yy = np.meshgrid(t, t)
        return np.column_stack([xx.ravel(), yy.ravel()])

    @cached_property
    def cell_vertices(self):
        """(nc, 4) vertex ids, counter-clockwise from the lower left corner."""
        n = self.n
        j, i = np.divmod(np.arange(self.n_cells), n)
        v0 = j * (n + 1) + i
        return np.column_stack([v0, v0 + 1, v0 + n + 2, v0 + n + 1])

    @cached_property
    def cell_origin(self):
        n = self.n
        j, i = np.divmod(np.arange(self.n_cells), n)
        return np.column_stack([i, j]) / n

    @cached_property
    def cell_index(self):
        """(nc, 2) integer column/row index of each cell."""
        j, i = np.divmod(np.arange(self.n_cells), self.n)
        return np.column_stack([i, j])

    @cached_property
    def cell_diameters(self):
        return np.full(self.n_cells, self.cell_diameter)

    @cached_property
    def is_boundary(self):
        return self.face_cells[:, 1] < 0

    @cached_property
    def interior_faces(self):
        return np.flatnonzero(~self.is_boundary)

    @cached_property
    def boundary_faces(self):
        return np.flatnonzero(self.is_boundary)

    @cached_property
    def face_length(self):
        return np.full(self.n_faces, self.side)

    @cached_property
    def face_h(self):
        """h_e: minimum diameter of the incident cells."""
        d = self.cell_diameters
        plus = d[self.face_cells[:, 0]]
        minus = np.where(self.is_boundary, np.inf, d[np.maximum(self.face_cells[:, 1], 0)])
        return np.minimum(plus, minus)

    @cached_property
    def face_midpoint(self):
        return self.face_points(np.array([0.5]))[:, 0, :]

    def face_points(self, s):
        """Physical coordinates (nf, len(s), 2) of face parameters ``s``."""
        plus = self.face_cells[:, 0]
        out = np.empty((self.n_faces, len(s), 2))
        for lf in range(4):
            sel = self.face_local[:, 0] == lf
            out[sel] = self.cell_origin[plus[sel], None, :] + self.side * local_face_points(lf, s)[None]
        return out

    def cell_points(self, ref):
        """Physical coordinates (nc, npts, 2) of reference points ``ref``."""
        return self.cell_origin[:, None, :] + self.side * np.asarray(ref)[None, :, :]


def build_uniform_mesh(n):
    """Uniform ``n x n`` mesh of (0, 1)^2."""
    if int(n) != n or n < 1:
        raise ValueError(f"cells per side must be a positive integer, got {n!r}")
    n = int(n)
    nv = n * (n + 1)
    nf = 2 * nv
    face_cells = np.full((nf, 2), -1, dtype=np.int64)
    face_local = np.full((nf, 2), -1, dtype=np.int64)
    face_normal = np.zeros((nf, 2))
    cell_faces = np.empty((n * n, 4), dtype=np.int64)

    j, i = np.meshgrid(np.arange(n), np.arange(n + 1), indexing="ij")
    fid = (j * (n + 1) + i).ravel()
    i, j = i.ravel(), j.ravel()
    left = np.where(i > 0, j * n + i - 1, -1)
    right = np.where(i < n, j * n + i, -1)
    inner = (i > 0) & (i < n)
    face_cells[fid] = np.where(inner[:, None], np.column_stack([left, right]), -1)
    face_local[fid] = np.where(inner[:, None], [RIGHT, LEFT], -1)
    face_normal[fid] = [1.0, 0.0]
    lo, hi = fid[i == 0], fid[i == n]
    face_cells[lo, 0] = right[i == 0]
    face_local[lo, 0] = LEFT
    face_normal[lo] = [-1.0, 0.0]
    face_cells[hi, 0] = left[i == n]
    face_local[hi, 0] = RIGHT
    cell_faces[right[i < n], LEFT] = fid[i < n]
    cell_faces[left[i > 0], RIGHT] = fid[i > 0]

    j, i = np.meshgrid(np.arange(n + 1), np.arange(n), indexing="ij")
    fid = (nv + j * n + i).ravel()
    i, j = i.ravel(), j.ravel()
    below = np.where(j > 0, (j - 1) * n + i, -1)
    above = np.where(j < n, j * n + i, -1)
    inner = (j > 0) & (j < n)
    face_cells[fid] = np.where(inner[:, None], np.column_stack([below, above]), -1)
    face_local[fid] = np.where(inner[:, None], [TOP, BOTTOM], -1)
    face_normal[fid] = [0.0, 1.0]
    lo, hi = fid[j == 0], fid[j == n]
    face_cells[lo, 0] = above[j == 0]
    face_local[lo, 0] = BOTTOM
    face_normal[lo] = [0.0, -1.0]
    face_cells[hi, 0] = below[j == n]
    face_local[hi, 0] = TOP
    cell_faces[above[j < n], BOTTOM] = fid[j < n]
    cell_faces[below[j > 0], TOP] = fid[j > 0]

    for arr in (face_cells, face_local, face_normal, cell_faces):
        arr.setflags(write=False)
    return Mesh(n, face_cells, face_local, face_normal, cell_faces)


def classify_boundary(mesh, b, q=3):
    """Label boundary faces inflow (b.n <= 0) or outflow (b.n > 0).

    ``b`` maps an (..., 2) array of points to (..., 2) velocities.  Returns an
    int array of :class:`FlowClass` values, ``INTERIOR`` for interior faces.
    A boundary face on which b.n changes sign raises ``ValueError``.
    """
    rule = gauss_rule(q, 1)
    s = np.concatenate([[0.0], rule.points[:, 0], [1.0]])
    out = np.full(mesh.n_faces, FlowClass.INTERIOR, dtype=np.int8)
    bf = mesh.boundary_faces
    pts = mesh.face_points(s)[bf]
    bn = np.einsum("fqk,fk->fq", np.asarray(b(pts), dtype=float), mesh.face_normal[bf])
    outflow = bn > 0
    mixed = outflow.any(axis=1) & ~outflow.all(axis=1)
    if mixed.any():
        f = int(bf[np.argmax(mixed)])
        raise ValueError(f"b.n changes sign along boundary face {f}")
    out[bf] = np.where(outflow[:, 0], FlowClass.OUTFLOW, FlowClass.INFLOW)
    return out


@dataclass(frozen=True, eq=False)
class RegionPartition:
    """Split of the cells into a continuous part T_C and a discontinuous part T_D.

    Face masks follow the convention that interface faces (one neighbour in
    each part) belong to the discontinuous skeleton.
    """

    mesh: Mesh
    continuous: np.ndarray  # bool per cell

    @cached_property
    def discontinuous(self):
        return ~self.continuous

    @cached_property
    def skeleton_c(self):
        fc = self.mesh.face_cells
        plus_c = self.continuous[fc[:, 0]]
        minus_c = np.where(fc[:, 1] < 0, True, self.continuous[np.maximum(fc[:, 1], 0)])
        return plus_c & minus_c

    @cached_property
    def skeleton_d(self):
        return ~self.skeleton_c

    @cached_property
    def interface(self):
        fc = self.mesh.face_cells
        inner = fc[:, 1] >= 0
        a = self.continuous[fc[:, 0]]
        b = self.continuous[np.maximum(fc[:, 1], 0)]
        return inner & (a != b)

    @cached_property
    def boundary_c(self):
        return self.mesh.is_boundary & self.skeleton_c

    @cached_property
    def boundary_d(self):
        return self.mesh.is_boundary & self.skeleton_d

    @property
    def n_continuous(self):
        return int(self.continuous.sum())

    def bitmap(self):
        """uint8 per cell, 1 for discontinuous cells."""
        return self.discontinuous.astype(np.uint8)


def make_region(mesh, selector):
    """Partition from a predicate or a boolean mask over the cells.

    A callable selector receives ``(cell_index, lower_left_corner)``.
    """
    if callable(selector):
        mask = np.array(
            [bool(selector(k, mesh.cell_origin[k])) for k in range(mesh.n_cells)], dtype=bool
        )
    else:
        mask = np.broadcast_to(np.asarray(selector, dtype=bool), (mesh.n_cells,)).copy()
    mask.setflags(write=False)
    return RegionPartition(mesh, mask)


def full_region(mesh, continuous):
    return make_region(mesh, np.full(mesh.n_cells, bool(continuous)))
