"""Mixed RT0-P0 solve of the incompressible Darcy system with no-flow boundary.

Velocity unknowns are the normal components ``u . n_f`` on interior faces
(boundary values are zero); the pressure is piecewise constant and pinned to
zero in one cell (cell 0 unless chosen otherwise).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .linalg import LinearSystem, scatter_blocks, solve_direct
from .mesh import local_face_points
from .spaces import Tables, build_rt0_p0, rt0_local_basis

WELL_COMPAT_TOL = 1e-12


@dataclass(frozen=True)
class ImdParams:
    """Miscible displacement data; defaults are the quarter five-spot set-up."""

    n: int = 16
    r: int = 1
    porosity: float = 0.1
    permeability: float = 0.0288
    mu0: float = 1.0
    mobility_ratio: float = 41.0
    rho0: float = 0.0
    rho1: float = 0.0
    gravity: tuple = (0.0, 0.0)
    well_rate: float = 0.018
    injection_rate: Optional[float] = None
    production_rate: Optional[float] = None
    c_hat: float = 1.0
    d_m: float = 1.8e-6
    d_l: float = 1.8e-4
    d_t: float = 1.8e-5
    dt: float = 4e-3
    T: float = 2.0
    c_d: float = 1.0
    c_pen: float = 10.0
    q: Optional[int] = None
    coupling_passes: int = 1

    def __post_init__(self):
        if min(self.d_m, self.d_l, self.d_t) <= 0:
            raise ValueError("d_m, d_l and d_t must be positive")
        if self.porosity <= 0 or self.permeability <= 0 or self.mu0 <= 0:
            raise ValueError("porosity, permeability and mu0 must be positive")
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        if abs(self.rate_in - self.rate_out) > WELL_COMPAT_TOL:
            raise ValueError(
                f"incompatible wells: injection {self.rate_in} vs production {self.rate_out}"
            )

    @property
    def rate_in(self):
        return self.well_rate if self.injection_rate is None else self.injection_rate

    @property
    def rate_out(self):
        return self.well_rate if self.production_rate is None else self.production_rate

    @property
    def n_steps(self):
        steps = self.T / self.dt
        k = round(steps)
        if abs(steps - k) > 1e-9 * max(1.0, steps):
            raise ValueError(f"T / dt = {steps} is not an integer")
        return int(k)

    @property
    def K_inv(self):
        return np.eye(2) / self.permeability


def viscosity(c, params):
    """mu(c) = mu(0) (1 + (M^{1/4} - 1) c)^{-4}, with c clamped to [0, 1]."""
    c = np.clip(c, 0.0, 1.0)
    return params.mu0 * (1.0 + (params.mobility_ratio ** 0.25 - 1.0) * c) ** -4


def density(c, params):
    c = np.clip(c, 0.0, 1.0)
    return params.rho0 + (params.rho1 - params.rho0) * c


def well_fields(mesh, params):
    """Per-cell injection and production rates (constant on one cell each)."""
    area = mesh.side ** 2
    q_in = np.zeros(mesh.n_cells)
    q_out = np.zeros(mesh.n_cells)
    q_in[mesh.n_cells - 1] = params.rate_in / area   # cell at (1, 1)
    q_out[0] = params.rate_out / area                # cell at (0, 0)
    return q_in, q_out


@dataclass
class DarcyState:
    velocity: np.ndarray  # normal velocity per face, along the stored face normal
    pressure: np.ndarray  # per cell


class DarcySolver:
    """RT0-P0 discretisation on a fixed mesh; concentration enters through mu."""

    def __init__(self, tables, params, pin=0):
        mesh = tables.mesh
        if not 0 <= pin < mesh.n_cells:
            raise ValueError(f"pinned cell {pin} outside the mesh")
        self.pin = pin
        self.keep_rows = np.delete(np.arange(mesh.n_cells), pin)
        self.tables, self.mesh, self.params = tables, mesh, params
        self.rt, self.p0 = build_rt0_p0(mesh)
        self.cell_w = tables.cell_w
        self.psi, self.div = rt0_local_basis(tables.cell_ref, mesh.side)  # (nq, 4, 2)
        self.face_psi = np.array([rt0_local_basis(local_face_points(lf, tables.face_s), mesh.side)[0]
                                  for lf in range(4)])  # (4, nqf, 4, 2)
        self.q_in, self.q_out = well_fields(mesh, params)
        self.free = mesh.interior_faces
        self.free_index = np.full(mesh.n_faces, -1, dtype=np.int64)
        self.free_index[self.free] = np.arange(self.free.size)

    @cached_property
    def divergence(self):
        """B[cell, face] = (div psi_f, 1_E), all faces."""
        rt = self.rt
        rows = np.repeat(np.arange(self.mesh.n_cells), 4)
        vals = (rt.cell_signs * self.div[None, :] * self.mesh.side ** 2).ravel()
        return sp.csr_matrix((vals, (rows, rt.cell_dofs.ravel())),
                             shape=(self.mesh.n_cells, self.mesh.n_faces))

    def velocity_block(self, mu):
        """(K^{-1} mu psi_j, psi_i) per cell; ``mu`` has shape (nc, nq)."""
        s = self.rt.cell_signs
        kpsi = np.einsum("kl,qjl->qjk", self.params.K_inv, self.psi)
        loc = np.einsum("q,cq,qjk,qik->cij", self.cell_w, mu, kpsi, self.psi)
        return loc * s[:, :, None] * s[:, None, :]

    def assemble(self, c_coeffs):
        """Pinned saddle point system for a dG concentration coefficient vector."""
        mesh, p = self.mesh, self.params
        c_values = self.tables.cell_values(np.asarray(c_coeffs, dtype=float))
        nu = self.free.size
        nc = mesh.n_cells
        mu = viscosity(c_values, p)
        loc = self.velocity_block(mu)
        dofs = self.free_index[self.rt.cell_dofs]
        # boundary dofs map to -1; route them to a dummy row/column that is dropped
        d = np.where(dofs < 0, nu, dofs)
        A = scatter_blocks(d, d, loc, (nu + 1, nu + 1))[:nu, :nu]
        Bfull = self.divergence[:, self.free]
        B = Bfull[self.keep_rows]
        mat = sp.bmat([[A, -B.T], [B, None]], format="csr")
        mat.sort_indices()

        g = np.asarray(p.gravity, dtype=float)
        rhs_u = np.zeros(nu + 1)
        if np.any(g):
            rho = density(c_values, p)
            sg = np.einsum("q,cq,qjk,k->cj", self.cell_w, rho, self.psi, g) * self.rt.cell_signs
            rhs_u = np.bincount(d.ravel(), sg.ravel(), minlength=nu + 1)
        area = mesh.side ** 2
        rhs_p = ((self.q_in - self.q_out) * area)[self.keep_rows]
        return LinearSystem(mat, np.concatenate([rhs_u[:nu], rhs_p]))

    def solve(self, c_coeffs):
        sol = solve_direct(self.assemble(c_coeffs))
        nu = self.free.size
        u = np.zeros(self.mesh.n_faces)
        u[self.free] = sol[:nu]
        pr = np.zeros(self.mesh.n_cells)
        pr[self.keep_rows] = sol[nu:]
        return DarcyState(u, pr)

    # evaluation -----------------------------------------------------
    def cell_velocity(self, state, psi=None):
        psi = self.psi if psi is None else psi
        coef = state.velocity[self.rt.cell_dofs] * self.rt.cell_signs
        return np.einsum("cj,qjk->cqk", coef, psi)

    def face_velocity(self, state, faces, side):
        """Velocity traces (len(faces), nqf, 2) from the ``side`` (0 plus, 1 minus) cell."""
        cells = self.mesh.face_cells[faces, side]
        lf = self.mesh.face_local[faces, side]
        coef = state.velocity[self.rt.cell_dofs[cells]] * self.rt.cell_signs[cells]
        return np.einsum("fj,fqjk->fqk", coef, self.face_psi[lf])

    def cell_balance(self, state):
        """Net outward flux minus the integrated source, per cell."""
        flux = self.divergence @ state.velocity
        return flux - (self.q_in - self.q_out) * self.mesh.side ** 2

    def production_flux(self, state):
        """Flux entering the production cell."""
        return -float((self.divergence @ state.velocity)[0])


def assemble_darcy(c_field, params):
    return DarcySolver(Tables(c_field.dofmap, params.q), params).assemble(c_field.coeffs)


def solve_darcy(c_field, params):
    return DarcySolver(Tables(c_field.dofmap, params.q), params).solve(c_field.coeffs)
