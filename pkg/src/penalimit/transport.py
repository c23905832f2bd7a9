"""Concentration transport for miscible displacement and the coupled time loop.

Each backward Euler step solves

    (phi (c - c_prev) / dt, d) + B_d(c, d; u) + B_cq(c, d; u) + sigma S(c, d) = (c_hat q_I, d)

with the SIPG dispersion form ``B_d`` (interior faces only, the flux
condition on the boundary is natural), the skew-symmetric upwind
convection/well form ``B_cq`` and the super-penalty ``S`` on interior faces
of the continuous skeleton.  ``B_cq`` is written so that

    B_cq(c, c; u) = 1/2 |q0 c|^2 + 1/2 sum_e | |u.n|^{1/2} [c] |^2_e

for any discrete velocity with ``div u = q_I - q_P``.

Darcy is solved with the previous concentration (sequential splitting);
``ImdParams.coupling_passes > 1`` iterates the pair within a step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .adapt import AdaptPolicy, face_jump_indicator, schedule, select_region
from .darcy import DarcySolver, DarcyState, ImdParams, well_fields
from .kernels import transport_cell_blocks, transport_face_blocks
from .linalg import (
    LinearSystem,
    apply_constraints,
    scatter_blocks,
    scatter_vector,
    solve_direct,
    solve_penalized,
)
from .mesh import build_uniform_mesh, full_region, make_region
from .spaces import ScalarField, Tables, build_constraints, build_dg_space

MODES = ("dg", "super", "cdg", "adaptive")


def dispersion(u, params):
    """phi (d_m I + |u| d_l E(u) + |u| d_t (I - E(u))), E(u) = u u^T / |u|^2.

    Rewritten as phi ((d_m + d_t |u|) I + (d_l - d_t) u u^T / |u|), which is
    continuous at u = 0 with value phi d_m I.
    """
    u = np.asarray(u, dtype=float)
    speed = np.linalg.norm(u, axis=-1)
    safe = np.where(speed > 0, speed, 1.0)
    outer = u[..., :, None] * u[..., None, :] / safe[..., None, None]
    eye = np.eye(2)
    iso = (params.d_m + params.d_t * speed)[..., None, None] * eye
    return params.porosity * (iso + (params.d_l - params.d_t) * outer)


def penalty_m_imd(d_plus, d_minus, normal, h, c_pen):
    """Pointwise dispersion penalty ``sqrt(C_pen max(n.D+ n, n.D- n) / h)``.

    ``d_minus`` may be None on boundary faces.  Shapes: D (f, q, 2, 2),
    normal (f, 2), h (f,).
    """
    nd_p = np.einsum("fk,fqkl,fl->fq", normal, d_plus, normal)
    if d_minus is None:
        nd = nd_p
    else:
        nd = np.maximum(nd_p, np.einsum("fk,fqkl,fl->fq", normal, d_minus, normal))
    return np.sqrt(c_pen * nd / np.asarray(h)[:, None])


@dataclass
class TransportForms:
    mass: sp.csr_matrix       # (phi c, d)
    B_d: sp.csr_matrix
    B_cq: sp.csr_matrix
    S: sp.csr_matrix
    source: np.ndarray        # (c_hat q_I, d)

    @property
    def B(self):
        return (self.B_d + self.B_cq).tocsr()


@dataclass
class TripleNormReport:
    dispersion: float = 0.0
    wells: float = 0.0
    advective_jump: float = 0.0
    penalty_jump: float = 0.0
    s_seminorm: float = 0.0

    @property
    def triple_sq(self):
        return self.dispersion + self.wells + self.advective_jump + self.penalty_jump


@dataclass
class TimeLoopState:
    step: int
    t: float
    c: np.ndarray
    region: object
    darcy: Optional[DarcyState] = None
    n_dofs: int = 0


@dataclass
class RunResult:
    params: ImdParams
    mode: str
    sigma: float
    diagnostics: list = field(default_factory=list)
    history: list = field(default_factory=list)

    @property
    def total_dofs(self):
        return int(sum(d["dofs"] for d in self.diagnostics))

    @property
    def l2l2_distance(self):
        if not self.diagnostics or "distance" not in self.diagnostics[0]:
            return math.nan
        return math.sqrt(self.params.dt * sum(d["distance"] ** 2 for d in self.diagnostics))


class ImdModel:
    """RT0 Darcy + dG/cdG transport on a uniform mesh."""

    def __init__(self, params):
        self.params = params
        self.mesh = build_uniform_mesh(params.n)
        self.dofmap = build_dg_space(self.mesh, params.r)
        self.tables = Tables(self.dofmap, params.q)
        self.darcy = DarcySolver(self.tables, params)
        self.q_in, self.q_out = well_fields(self.mesh, params)

    @cached_property
    def l2_mass(self):
        t = self.tables
        loc = np.einsum("q,qi,qj->ij", t.cell_w, t.phi, t.phi)
        blocks = np.broadcast_to(loc, (self.mesh.n_cells,) + loc.shape)
        cd = self.dofmap.cell_dofs
        return scatter_blocks(cd, cd, blocks, (self.dofmap.n_dofs,) * 2)

    def l2_norm(self, coeffs):
        return math.sqrt(max(float(coeffs @ (self.l2_mass @ coeffs)), 0.0))

    def velocity_data(self, state):
        t = self.tables
        fi = t.fi
        return (
            self.darcy.cell_velocity(state),
            self.darcy.face_velocity(state, fi, 0),
            self.darcy.face_velocity(state, fi, 1),
        )

    def forms(self, state, region):
        """Assemble all transport forms for the velocity in ``state``."""
        p, t = self.params, self.tables
        n = self.dofmap.n_dofs
        cd = self.dofmap.cell_dofs
        r = p.r
        w = t.cell_w
        u_cell, u_plus, u_minus = self.velocity_data(state)

        mass_loc = p.porosity * np.einsum("q,qi,qj->ij", w, t.phi, t.phi)
        mass = scatter_blocks(cd, cd, np.broadcast_to(mass_loc, (len(cd),) + mass_loc.shape), (n, n))

        qsum = self.q_in + self.q_out
        vol_d, vol_cq = transport_cell_blocks(w, t.phi, t.dphi, dispersion(u_cell, p), u_cell, qsum)

        # interior faces
        fi, wf, nrm = t.fi, t.face_w, t.fi_normal
        Dp, Dm = dispersion(u_plus, p), dispersion(u_minus, p)
        m = penalty_m_imd(Dp, Dm, nrm, self.mesh.face_h[fi], p.c_pen)
        jmp = t.interior_jump_basis()
        dn_p = np.einsum("fqkl,fl->fqk", Dp, nrm)
        dn_m = np.einsum("fqkl,fl->fqk", Dm, nrm)
        avg = 0.5 * np.concatenate(
            [np.einsum("fqlk,fqk->fql", t.fi_gplus, dn_p), np.einsum("fqlk,fqk->fql", t.fi_gminus, dn_m)],
            axis=2,
        )
        beta = np.einsum("fqk,fk->fq", 0.5 * (u_plus + u_minus), nrm)
        zeros = np.zeros_like(t.fi_vplus)
        vp = np.concatenate([t.fi_vplus, zeros], axis=2)
        vm = np.concatenate([zeros, t.fi_vminus], axis=2)
        fwd = (beta > 0)[:, :, None]
        up = np.where(fwd, vp, vm)
        down = np.where(fwd, vm, vp)
        ms = p.c_d * r * r / self.mesh.face_h[fi] * region.skeleton_c[fi]
        face_d, face_cq, face_s = transport_face_blocks(wf, jmp, avg, m, beta, up, down, ms)

        shape = (n, n)
        B_d = (scatter_blocks(cd, cd, vol_d, shape) + scatter_blocks(t.fi_dofs, t.fi_dofs, face_d, shape)).tocsr()
        B_cq = (scatter_blocks(cd, cd, vol_cq, shape) + scatter_blocks(t.fi_dofs, t.fi_dofs, face_cq, shape)).tocsr()
        S = scatter_blocks(t.fi_dofs, t.fi_dofs, face_s, shape)
        src = scatter_vector(cd, p.c_hat * self.q_in[:, None] * np.einsum("q,qi->i", w, t.phi)[None, :], n)
        return TransportForms(mass, B_d, B_cq, S, src)

    # norms -------------------------------------------------------------
    def triple_norm(self, coeffs, state, region):
        p, t = self.params, self.tables
        u_cell, u_plus, u_minus = self.velocity_data(state)
        grad = t.cell_grads(coeffs)
        val = t.cell_values(coeffs)
        rep = TripleNormReport()
        D = dispersion(u_cell, p)
        rep.dispersion = float(np.einsum("q,cqk,cqkl,cql->", t.cell_w, grad, D, grad))
        rep.wells = 0.5 * float(np.einsum("q,c,cq->", t.cell_w, self.q_in + self.q_out, val ** 2))
        plus, minus = t.interior_traces(coeffs)
        jmp = plus - minus
        fi = t.fi
        un = np.einsum("fqk,fk->fq", 0.5 * (u_plus + u_minus), t.fi_normal)
        rep.advective_jump = 0.5 * float(np.einsum("q,fq->", t.face_w, np.abs(un) * jmp ** 2))
        m = penalty_m_imd(dispersion(u_plus, p), dispersion(u_minus, p), t.fi_normal,
                          self.mesh.face_h[fi], p.c_pen)
        rep.penalty_jump = float(np.einsum("q,fq->", t.face_w, m * jmp ** 2))
        M = p.c_d * p.r ** 2 / self.mesh.face_h[fi] * region.skeleton_c[fi]
        rep.s_seminorm = math.sqrt(float(np.einsum("f,q,fq->", M, t.face_w, jmp ** 2)))
        return rep

    # time stepping -----------------------------------------------------
    def transport_system(self, forms, c_prev, sigma):
        dt = self.params.dt
        base = (forms.mass / dt + forms.B_d + forms.B_cq).tocsr()
        rhs = forms.mass @ c_prev / dt + forms.source
        return base, rhs

    def solve_transport(self, state, c_prev, region, sigma=0.0, direct=False):
        """One transport solve; returns (dG coefficients, solved dof count)."""
        forms = self.forms(state, region)
        base, rhs = self.transport_system(forms, c_prev, sigma)
        if direct:
            cons = build_constraints(self.dofmap, region, dirichlet=False)
            restricted = apply_constraints(LinearSystem(base, rhs), cons)
            return cons.prolong(solve_direct(restricted)), cons.n_free
        cons = build_constraints(self.dofmap, region, dirichlet=False) if sigma else None
        prol = None if cons is None else cons.prolongation
        return solve_penalized(base, forms.S, sigma, rhs, prol), self.dofmap.n_dofs

    def step(self, prev, sigma=0.0, region=None, direct=False):
        """Advance ``prev`` by one step with a fixed region."""
        region = prev.region if region is None else region
        c_lag = prev.c
        c_new, ndofs, darcy = None, 0, None
        for _ in range(max(1, self.params.coupling_passes)):
            darcy = self.darcy.solve(c_lag)
            c_new, ndofs = self.solve_transport(darcy, prev.c, region, sigma, direct)
            c_lag = c_new
        j = prev.step + 1
        return TimeLoopState(j, j * self.params.dt, c_new, region, darcy, ndofs)

    def initial_state(self, c0=None):
        c = np.zeros(self.dofmap.n_dofs) if c0 is None else np.asarray(c0, dtype=float).copy()
        return TimeLoopState(0, 0.0, c, full_region(self.mesh, False))

    def run(self, mode="dg", sigma=0.0, region=None, policy=None, reference=None,
            n_steps=None, c0=None, keep_history=False, callback=None):
        """Execute the time loop.

        ``mode``: ``dg`` (sigma = 0, no continuous region), ``super`` (full dG
        space plus ``sigma S`` on ``region``, default all cells), ``cdg``
        (test functions in the cdG space of ``region``, default all cells)
        or ``adaptive`` (region chosen by ``policy``).  ``reference`` is a
        callable ``step -> coefficients`` (or a sequence) to measure the L2
        distance against at every step.
        """
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        p = self.params
        n_steps = p.n_steps if n_steps is None else int(n_steps)
        if mode in ("super", "cdg") and region is None:
            region = full_region(self.mesh, True)
        if mode == "dg":
            region, sigma = full_region(self.mesh, False), 0.0
        if mode == "adaptive" and policy is None:
            raise ValueError("adaptive mode needs an AdaptPolicy")
        if reference is not None and not callable(reference):
            seq = reference
            reference = lambda j: seq[j - 1]  # noqa: E731

        result = RunResult(p, mode, sigma)
        state = self.initial_state(c0)
        held = None
        for j in range(1, n_steps + 1):
            if mode == "adaptive":
                reset = schedule(j, policy)
                if reset or held is None:
                    state = self.step(state, region=full_region(self.mesh, False))
                    eta = face_jump_indicator(self.tables, state.c)
                    held = select_region(self.mesh, eta, policy.tol, policy.include_boundary)
                else:
                    state = self.step(state, region=held, direct=True)
            else:
                state = self.step(state, sigma=sigma, region=region, direct=(mode == "cdg"))
            diag = {
                "step": j,
                "t": state.t,
                "mass": float(p.porosity * np.einsum("q,cq->", self.tables.cell_w,
                                                     self.tables.cell_values(state.c))),
                "energy": math.sqrt(p.porosity) * self.l2_norm(state.c),
                "dofs": state.n_dofs,
                "continuous_cells": state.region.n_continuous,
            }
            if reference is not None:
                diag["distance"] = self.l2_norm(state.c - np.asarray(reference(j)))
            result.diagnostics.append(diag)
            if keep_history:
                result.history.append(state.c.copy())
            if callback is not None:
                callback(state, diag)
        return result


def assemble_transport(model, c_prev, darcy_state, region, sigma):
    """Linear system of one transport step in dG dofs (sum formed in double precision)."""
    forms = model.forms(darcy_state, region)
    base, rhs = model.transport_system(forms, c_prev, sigma)
    return LinearSystem((base + sigma * forms.S).tocsr(), rhs)


def run(params, mode="dg", sigma=0.0, region=None, policy=None, **kwargs):
    return ImdModel(params).run(mode, sigma, region, policy, **kwargs)
