"""Finite element spaces on uniform square meshes.

* discontinuous tensor-product Lagrange spaces Q_r (r = 1, 2) with nodes at
  the Gauss-Lobatto points of each cell,
* the continuous-discontinuous subspace, realised as a 0/1 prolongation from
  merged node groups to dG dofs,
* the lowest order Raviart-Thomas / piecewise constant pair.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .linalg import gauss_rule
from .mesh import LOCAL_NORMALS, local_face_points

GL_NODES = {1: np.array([0.0, 1.0]), 2: np.array([0.0, 0.5, 1.0])}


def _lagrange_1d(nodes, x):
    """Values and derivatives (len(x), len(nodes)) of the 1D Lagrange basis."""
    x = np.asarray(x, dtype=float)
    k = len(nodes)
    val = np.ones((len(x), k))
    der = np.zeros((len(x), k))
    for i in range(k):
        others = [nodes[m] for m in range(k) if m != i]
        denom = np.prod([nodes[i] - o for o in others])
        for o in others:
            val[:, i] *= x - o
        for skip in range(len(others)):
            term = np.ones(len(x))
            for m, o in enumerate(others):
                if m != skip:
                    term *= x - o
            der[:, i] += term
        val[:, i] /= denom
        der[:, i] /= denom
    return val, der


def qr_basis(r, ref):
    """Q_r basis on the reference square.

    Returns values (npts, (r+1)^2) and reference gradients (npts, (r+1)^2, 2).
    Local dof ``a + (r + 1) * b`` sits at node ``(x_a, x_b)``.
    """
    ref = np.atleast_2d(ref)
    nodes = GL_NODES[r]
    vx, dx = _lagrange_1d(nodes, ref[:, 0])
    vy, dy = _lagrange_1d(nodes, ref[:, 1])
    val = np.einsum("pb,pa->pba", vy, vx).reshape(len(ref), -1)
    gx = np.einsum("pb,pa->pba", vy, dx).reshape(len(ref), -1)
    gy = np.einsum("pb,pa->pba", dy, vx).reshape(len(ref), -1)
    return val, np.stack([gx, gy], axis=-1)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Global dof numbering of a space on a mesh.

    ``cell_dofs[k]`` lists the global dofs of cell ``k``.  For RT0 the dofs
    are face ids and ``cell_signs`` converts the global face orientation into
    the local outward one.
    """

    mesh: object
    kind: str  # "dg", "rt0" or "p0"
    degree: int
    cell_dofs: np.ndarray
    n_dofs: int
    cell_signs: np.ndarray | None = None

    @property
    def n_local(self):
        return self.cell_dofs.shape[1]

    @cached_property
    def node_lattice(self):
        """Integer lattice coordinates of every dG node (spacing side / r)."""
        if self.kind != "dg":
            raise TypeError("node lattice only defined for dG scalar spaces")
        r = self.degree
        a, b = np.divmod(np.arange(self.n_local), r + 1)[::-1]
        ij = self.mesh.cell_index
        lat = np.empty((self.n_dofs, 2), dtype=np.int64)
        lat[self.cell_dofs, 0] = ij[:, 0, None] * r + a[None, :]
        lat[self.cell_dofs, 1] = ij[:, 1, None] * r + b[None, :]
        return lat


def build_dg_space(mesh, r):
    if r not in GL_NODES:
        raise ValueError(f"unsupported polynomial degree r={r}; expected 1 or 2")
    nl = (r + 1) ** 2
    cell_dofs = np.arange(mesh.n_cells * nl, dtype=np.int64).reshape(mesh.n_cells, nl)
    return DofMap(mesh, "dg", r, cell_dofs, mesh.n_cells * nl)


def build_rt0_p0(mesh):
    """RT0 (one normal velocity per face) and P0 (one value per cell) dof maps."""
    normals = mesh.face_normal[mesh.cell_faces]  # (nc, 4, 2)
    signs = np.einsum("cfk,fk->cf", normals, LOCAL_NORMALS)
    rt = DofMap(mesh, "rt0", 0, mesh.cell_faces.copy(), mesh.n_faces, cell_signs=signs)
    p0 = DofMap(mesh, "p0", 0, np.arange(mesh.n_cells, dtype=np.int64)[:, None], mesh.n_cells)
    return rt, p0


def rt0_local_basis(ref, side):
    """Canonical RT0 shape functions with unit outward normal velocity on one face.

    Returns values (npts, 4, 2) in physical units and the (constant)
    divergences (4,).
    """
    ref = np.atleast_2d(ref)
    x, y = ref[:, 0], ref[:, 1]
    z = np.zeros_like(x)
    val = np.stack([
        np.stack([x - 1.0, z], -1),
        np.stack([x, z], -1),
        np.stack([z, y - 1.0], -1),
        np.stack([z, y], -1),
    ], axis=1)
    return val, np.full(4, 1.0 / side)


@dataclass(frozen=True, eq=False)
class ConstraintMap:
    """Prolongation ``P`` from cdG dofs to dG dofs.

    Columns are node groups: a merged set of geometrically coincident nodes of
    continuous cells, or a single node of a discontinuous cell.  Rows of
    eliminated (strong Dirichlet) dofs are empty.
    """

    prolongation: sp.csr_matrix
    eliminated: np.ndarray  # dG dofs with an empty row

    @property
    def n_free(self):
        return self.prolongation.shape[1]

    @property
    def n_dg(self):
        return self.prolongation.shape[0]

    def prolong(self, coeffs):
        return self.prolongation @ coeffs


def build_constraints(dofmap, region, dirichlet=True):
    """cdG subspace of a dG space for the partition ``region``.

    Nodes of continuous cells that coincide are merged; with ``dirichlet``
    those lying on the boundary of the domain are eliminated.  Nodes of
    discontinuous cells keep their own dof.
    """
    if dofmap.kind != "dg":
        raise TypeError("constraints apply to dG scalar spaces only")
    mesh = dofmap.mesh
    n_dg = dofmap.n_dofs
    cont_dof = np.zeros(n_dg, dtype=bool)
    cont_dof[dofmap.cell_dofs[region.continuous]] = True
    lat = dofmap.node_lattice
    width = mesh.n * dofmap.degree + 1
    key = np.where(cont_dof, lat[:, 1] * width + lat[:, 0], -1)
    on_bdry = (lat == 0).any(axis=1) | (lat == width - 1).any(axis=1)
    drop = cont_dof & on_bdry if dirichlet else np.zeros(n_dg, dtype=bool)

    col = np.full(n_dg, -1, dtype=np.int64)
    seen = {}
    nxt = 0
    for d in range(n_dg):
        if drop[d]:
            continue
        if key[d] < 0:
            col[d] = nxt
            nxt += 1
            continue
        c = seen.get(key[d])
        if c is None:
            c = seen[key[d]] = nxt
            nxt += 1
        col[d] = c
    keep = col >= 0
    rows = np.flatnonzero(keep)
    p = sp.csr_matrix((np.ones(rows.size), (rows, col[keep])), shape=(n_dg, nxt))
    p.sort_indices()
    return ConstraintMap(p, np.flatnonzero(drop))


def identity_constraints(dofmap):
    p = sp.identity(dofmap.n_dofs, format="csr")
    return ConstraintMap(p, np.zeros(0, dtype=np.int64))


@dataclass(eq=False)
class ScalarField:
    dofmap: DofMap
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.dofmap.n_dofs,):
            raise ValueError(
                f"coefficient vector of length {self.coeffs.shape} for {self.dofmap.n_dofs} dofs"
            )

    def __sub__(self, other):
        return ScalarField(self.dofmap, self.coeffs - other.coeffs)

    def __add__(self, other):
        return ScalarField(self.dofmap, self.coeffs + other.coeffs)


class Tables:
    """Quadrature points and basis tables for a dG space.

    Everything that depends only on the reference cell is evaluated once;
    on a uniform mesh the same tables serve every cell and every face.
    """

    def __init__(self, dofmap, q=None):
        mesh = dofmap.mesh
        r = dofmap.degree
        q = r + 2 if q is None else q
        self.dofmap, self.mesh, self.r, self.q = dofmap, mesh, r, q
        h = mesh.side
        cell_rule = gauss_rule(q, 2)
        face_rule = gauss_rule(q, 1)
        self.cell_ref = cell_rule.points
        self.cell_w = cell_rule.weights * h * h
        self.face_s = face_rule.points[:, 0]
        self.face_w = face_rule.weights * h
        self.phi, g = qr_basis(r, self.cell_ref)
        self.dphi = g / h
        self.cell_x = mesh.cell_points(self.cell_ref)
        tv, tg = [], []
        for lf in range(4):
            v, gg = qr_basis(r, local_face_points(lf, self.face_s))
            tv.append(v)
            tg.append(gg / h)
        self.trace_phi = np.array(tv)    # (4, nqf, nl)
        self.trace_dphi = np.array(tg)   # (4, nqf, nl, 2)
        self.face_x = mesh.face_points(self.face_s)

        fc, fl = mesh.face_cells, mesh.face_local
        fi, fb = mesh.interior_faces, mesh.boundary_faces
        self.fi, self.fb = fi, fb
        cd = dofmap.cell_dofs
        # interior faces: stacked dofs [plus | minus]
        self.fi_dofs = np.hstack([cd[fc[fi, 0]], cd[fc[fi, 1]]])
        self.fi_normal = mesh.face_normal[fi]
        self.fi_x = self.face_x[fi]
        self.fi_vplus = self.trace_phi[fl[fi, 0]]
        self.fi_vminus = self.trace_phi[fl[fi, 1]]
        self.fi_gplus = self.trace_dphi[fl[fi, 0]]
        self.fi_gminus = self.trace_dphi[fl[fi, 1]]
        # boundary faces
        self.fb_dofs = cd[fc[fb, 0]]
        self.fb_normal = mesh.face_normal[fb]
        self.fb_x = self.face_x[fb]
        self.fb_v = self.trace_phi[fl[fb, 0]]
        self.fb_g = self.trace_dphi[fl[fb, 0]]

    # field evaluation -------------------------------------------------
    def cell_values(self, coeffs):
        return coeffs[self.dofmap.cell_dofs] @ self.phi.T

    def cell_grads(self, coeffs):
        return np.einsum("cl,qlk->cqk", coeffs[self.dofmap.cell_dofs], self.dphi)

    def interior_traces(self, coeffs):
        """(plus, minus) traces on interior faces, each (nfi, nqf)."""
        c = coeffs[self.fi_dofs]
        nl = self.dofmap.n_local
        plus = np.einsum("fl,fql->fq", c[:, :nl], self.fi_vplus)
        minus = np.einsum("fl,fql->fq", c[:, nl:], self.fi_vminus)
        return plus, minus

    def boundary_traces(self, coeffs):
        return np.einsum("fl,fql->fq", coeffs[self.fb_dofs], self.fb_v)

    def interior_jump_basis(self):
        """Scalar jump coefficient (along n+) of the stacked local basis, (nfi, nqf, 2nl)."""
        return np.concatenate([self.fi_vplus, -self.fi_vminus], axis=2)
