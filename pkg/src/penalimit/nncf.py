"""Interior penalty dG / cdG / cG for equations of non-negative characteristic form.

Solves ``-div(a grad u) + b.grad u + c u = f`` on (0, 1)^2 with homogeneous
Dirichlet data, imposed weakly on discontinuous boundary faces and strongly
on the boundary of the continuous region.

The bilinear form is ``B = B_d + B_ar`` with the interior penalty diffusion
part (``theta`` selects SIPG -1, IIPG 0, NIPG 1) and the upwinded
advection-reaction part.  ``S`` penalises jumps on the continuous skeleton
only; ``B + sigma S`` is the super-penalised form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .linalg import (
    LinearSystem,
    apply_constraints,
    scatter_blocks,
    scatter_vector,
    solve_direct,
    solve_penalized,
)
from .mesh import classify_boundary
from .spaces import ScalarField, Tables, build_constraints, build_dg_space

SIGN_TOL = 1e-12


def _zero(x):
    return np.zeros(np.shape(x)[:-1])


@dataclass
class NncfProblem:
    """Coefficients as vectorised callables of points with shape (..., 2)."""

    a: Callable
    b: Callable
    c: Callable
    f: Callable
    div_b: Callable = _zero
    exact: Optional[Callable] = None
    exact_grad: Optional[Callable] = None
    name: str = ""


def _layer_profile(t, eps):
    # g(t) = t - (exp((t-1)/eps) - exp(-1/eps)) / (1 - exp(-1/eps))
    den = -math.expm1(-1.0 / eps)
    e = np.exp((t - 1.0) / eps)
    g = t - (e - math.exp(-1.0 / eps)) / den
    dg = 1.0 - e / (eps * den)
    return g, dg


def layer_problem(eps, b=(1.0, 1.0)):
    """Boundary layer benchmark ``-eps lap u + (1, 1).grad u = f``.

    The exact solution is a product of outflow layer profiles g(x) g(y); for
    this profile ``-eps g'' + g' = 1`` so that ``f = g(x) + g(y)``.
    """
    if tuple(b) != (1.0, 1.0):
        raise ValueError("the closed-form solution assumes b = (1, 1)")
    bvec = np.array(b, dtype=float)

    def a(x):
        return eps * np.broadcast_to(np.eye(2), np.shape(x)[:-1] + (2, 2))

    def exact(x):
        gx, _ = _layer_profile(x[..., 0], eps)
        gy, _ = _layer_profile(x[..., 1], eps)
        return gx * gy

    def exact_grad(x):
        gx, dgx = _layer_profile(x[..., 0], eps)
        gy, dgy = _layer_profile(x[..., 1], eps)
        return np.stack([dgx * gy, gx * dgy], axis=-1)

    def f(x):
        gx, _ = _layer_profile(x[..., 0], eps)
        gy, _ = _layer_profile(x[..., 1], eps)
        return gx + gy

    return NncfProblem(
        a=a,
        b=lambda x: np.broadcast_to(bvec, np.shape(x)),
        c=_zero,
        f=f,
        exact=exact,
        exact_grad=exact_grad,
        name=f"layer(eps={eps:g})",
    )


@dataclass(frozen=True)
class PenaltyConfig:
    theta: int = 1
    c_p: float = 10.0
    c_d: float = 0.1
    c_ar: float = 0.0
    sigma: float = 0.0
    q: Optional[int] = None

    def __post_init__(self):
        if self.theta not in (-1, 0, 1):
            raise ValueError(f"theta must be -1, 0 or 1, got {self.theta}")
        for name in ("c_p", "c_d", "c_ar", "sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class NormReport:
    diffusive: float = 0.0
    reaction: float = 0.0
    advective_jump: float = 0.0
    penalty_jump: float = 0.0
    s_seminorm: float = 0.0
    l2: float = 0.0
    h1_semi: float = 0.0
    jump_l2: float = 0.0
    l2_error: float = math.nan
    h1_semi_error: float = math.nan

    @property
    def dg_norm_sq(self):
        return self.diffusive + self.reaction + self.advective_jump + self.penalty_jump

    @property
    def dg_norm(self):
        return math.sqrt(self.dg_norm_sq)


def cell_abar(tables, a_values):
    """Per-cell sup over the volume rule of |sqrt(a)|_2 = sqrt(lambda_max(a))."""
    lam = np.linalg.eigvalsh(a_values)
    return np.sqrt(np.maximum(lam[..., -1], 0.0)).max(axis=1)


def _face_average(mesh, per_cell):
    fc = mesh.face_cells
    plus = per_cell[fc[:, 0]]
    minus = per_cell[np.maximum(fc[:, 1], 0)]
    return np.where(fc[:, 1] < 0, plus, 0.5 * (plus + minus))


def penalty_m(mesh, abar, r, c_p):
    """Interior penalty weight per face, ``C_p {abar r^2} / h_e``."""
    return c_p * _face_average(mesh, np.asarray(abar) * r * r) / mesh.face_h


def superpenalty_M(mesh, abar, r, c_d, c_ar):
    """Super-penalty weight per face, ``C_ar + C_d {abar r^2} / h_e``."""
    return c_ar + c_d * _face_average(mesh, np.asarray(abar) * r * r) / mesh.face_h


@dataclass
class NncfForms:
    B: object
    S: object
    rhs: np.ndarray

    def system(self, sigma):
        mat = (self.B + sigma * self.S).tocsr() if sigma else self.B.copy()
        return LinearSystem(mat, self.rhs.copy())


class NncfModel:
    """Discretisation of one problem on one mesh/region; caches the forms."""

    def __init__(self, problem, cfg, region, r=1):
        self.problem, self.cfg, self.region = problem, cfg, region
        self.mesh = region.mesh
        self.dofmap = build_dg_space(self.mesh, r)
        self.tables = Tables(self.dofmap, cfg.q)
        self.r = r
        t = self.tables
        self.a_cell = np.asarray(problem.a(t.cell_x), dtype=float)
        self.b_cell = np.asarray(problem.b(t.cell_x), dtype=float)
        self.c_cell = np.asarray(problem.c(t.cell_x), dtype=float)
        self.c0_sq = self.c_cell - 0.5 * np.asarray(problem.div_b(t.cell_x), dtype=float)
        self._validate()
        self.abar = cell_abar(t, self.a_cell)
        self.m = penalty_m(self.mesh, self.abar, r, cfg.c_p)
        self.M = superpenalty_M(self.mesh, self.abar, r, cfg.c_d, cfg.c_ar)
        self.flow = classify_boundary(self.mesh, problem.b)

    def _validate(self):
        lam = np.linalg.eigvalsh(self.a_cell)[..., 0]
        scale = max(1.0, float(np.abs(self.a_cell).max()))
        if (lam < -SIGN_TOL * scale).any():
            c, q = np.unravel_index(np.argmin(lam), lam.shape)
            raise ValueError(f"diffusion matrix indefinite at {self.tables.cell_x[c, q]}")
        if (self.c0_sq < -SIGN_TOL).any():
            c, q = np.unravel_index(np.argmin(self.c0_sq), self.c0_sq.shape)
            raise ValueError(f"c - div(b)/2 negative at {self.tables.cell_x[c, q]}")

    def volume_blocks(self):
        """Per-cell ``(a grad w, grad v) + (b.grad w, v) + (c w, v)``, rows = test functions."""
        t, w = self.tables, self.tables.cell_w
        adphi = np.einsum("cqkl,qjl->cqjk", self.a_cell, t.dphi)
        vol = np.einsum("q,cqjk,qik->cij", w, adphi, t.dphi)
        bgrad = np.einsum("cqk,qjk->cqj", self.b_cell, t.dphi)
        vol += np.einsum("q,cqj,qi->cij", w, bgrad, t.phi)
        vol += np.einsum("q,cq,qj,qi->cij", w, self.c_cell, t.phi, t.phi)
        return vol

    @cached_property
    def forms(self):
        t, cfg, mesh = self.tables, self.cfg, self.mesh
        n = self.dofmap.n_dofs
        cd = self.dofmap.cell_dofs
        theta = cfg.theta

        w = t.cell_w
        blocks_b = [(cd, self.volume_blocks())]
        blocks_s = []

        # interior faces
        fi = t.fi
        wf = t.face_w
        nrm = t.fi_normal
        a_f = np.asarray(self.problem.a(t.fi_x), dtype=float)
        an = np.einsum("fqkl,fl->fqk", a_f, nrm)  # a n+, a symmetric
        jmp = t.interior_jump_basis()
        avg = 0.5 * np.concatenate(
            [np.einsum("fqlk,fqk->fql", t.fi_gplus, an), np.einsum("fqlk,fqk->fql", t.fi_gminus, an)],
            axis=2,
        )
        m = self.m[fi]
        face = np.einsum("f,q,fqi,fqj->fij", m, wf, jmp, jmp)
        face -= np.einsum("q,fqi,fqj->fij", wf, jmp, avg)
        face += theta * np.einsum("q,fqi,fqj->fij", wf, avg, jmp)
        beta = np.einsum("fqk,fk->fq", np.asarray(self.problem.b(t.fi_x), dtype=float), nrm)
        zeros = np.zeros_like(t.fi_vplus)
        down = np.where(
            (beta > 0)[:, :, None],
            np.concatenate([zeros, t.fi_vminus], axis=2),
            np.concatenate([t.fi_vplus, zeros], axis=2),
        )
        face -= np.einsum("q,fq,fqi,fqj->fij", wf, beta, down, jmp)
        blocks_b.append((t.fi_dofs, face))
        sc = self.region.skeleton_c[fi]
        s_int = np.einsum("f,q,fqi,fqj->fij", self.M[fi] * sc, wf, jmp, jmp)
        blocks_s.append((t.fi_dofs, s_int))

        # boundary faces
        fb = t.fb
        nb = t.fb_normal
        a_b = np.asarray(self.problem.a(t.fb_x), dtype=float)
        an_b = np.einsum("fqkl,fl->fqk", a_b, nb)
        flux = np.einsum("fqlk,fqk->fql", t.fb_g, an_b)
        v = t.fb_v
        bface = np.einsum("f,q,fqi,fqj->fij", self.m[fb], wf, v, v)
        bface -= np.einsum("q,fqi,fqj->fij", wf, v, flux)
        bface += theta * np.einsum("q,fqi,fqj->fij", wf, flux, v)
        bn = np.einsum("fqk,fk->fq", np.asarray(self.problem.b(t.fb_x), dtype=float), nb)
        inflow = np.where(bn <= 0, bn, 0.0)
        bface -= np.einsum("q,fq,fqi,fqj->fij", wf, inflow, v, v)
        blocks_b.append((t.fb_dofs, bface))
        sb = self.region.skeleton_c[fb]
        blocks_s.append((t.fb_dofs, np.einsum("f,q,fqi,fqj->fij", self.M[fb] * sb, wf, v, v)))

        B = _sum_blocks(blocks_b, n)
        S = _sum_blocks(blocks_s, n)
        fval = np.asarray(self.problem.f(t.cell_x), dtype=float)
        rhs = scatter_vector(cd, np.einsum("q,cq,qi->ci", w, fval, t.phi), n)
        return NncfForms(B, S, rhs)

    @cached_property
    def constraints(self):
        return build_constraints(self.dofmap, self.region, dirichlet=True)

    def field(self, coeffs):
        return ScalarField(self.dofmap, coeffs)

    def solve_super_penalized(self, sigma=None):
        sigma = self.cfg.sigma if sigma is None else sigma
        fm = self.forms
        return self.field(solve_penalized(fm.B, fm.S, sigma, fm.rhs, self.constraints.prolongation))

    def solve_cdg_direct(self):
        # S vanishes identically on the constrained subspace, so only B is restricted
        restricted = apply_constraints(self.forms.system(0.0), self.constraints)
        return self.field(self.constraints.prolong(solve_direct(restricted)))

    def norms(self, fld):
        return nncf_norms(self, fld.coeffs if isinstance(fld, ScalarField) else fld)


def _sum_blocks(blocks, n):
    import scipy.sparse as sp

    total = sp.csr_matrix((n, n))
    for dofs, blk in blocks:
        total = total + scatter_blocks(dofs, dofs, blk, (n, n))
    total.sum_duplicates()
    total.sort_indices()
    return total


def field_norms(tables, coeffs):
    """Broken L2, broken H1 seminorm and L2 norm of the jumps over all faces."""
    t = tables
    val = t.cell_values(coeffs)
    grad = t.cell_grads(coeffs)
    l2 = float(np.einsum("q,cq->", t.cell_w, val ** 2))
    h1 = float(np.einsum("q,cqk->", t.cell_w, grad ** 2))
    plus, minus = t.interior_traces(coeffs)
    jint = plus - minus
    jb = t.boundary_traces(coeffs)
    jl2 = float(np.einsum("q,fq->", t.face_w, jint ** 2) + np.einsum("q,fq->", t.face_w, jb ** 2))
    return math.sqrt(l2), math.sqrt(h1), math.sqrt(jl2)


def nncf_norms(model, coeffs):
    """All pieces of the dG norm, the S-seminorm and errors, by direct quadrature."""
    t = model.tables
    grad = t.cell_grads(coeffs)
    val = t.cell_values(coeffs)
    rep = NormReport()
    rep.diffusive = float(np.einsum("q,cqk,cqkl,cql->", t.cell_w, grad, model.a_cell, grad))
    rep.reaction = float(np.einsum("q,cq,cq->", t.cell_w, model.c0_sq, val ** 2))
    plus, minus = t.interior_traces(coeffs)
    jint = plus - minus
    jb = t.boundary_traces(coeffs)
    fi, fb = t.fi, t.fb
    b_i = np.einsum("fqk,fk->fq", np.asarray(model.problem.b(t.fi_x), dtype=float), t.fi_normal)
    b_b = np.einsum("fqk,fk->fq", np.asarray(model.problem.b(t.fb_x), dtype=float), t.fb_normal)
    rep.advective_jump = 0.5 * float(
        np.einsum("q,fq->", t.face_w, np.abs(b_i) * jint ** 2)
        + np.einsum("q,fq->", t.face_w, np.abs(b_b) * jb ** 2)
    )
    rep.penalty_jump = float(
        np.einsum("f,q,fq->", model.m[fi], t.face_w, jint ** 2)
        + np.einsum("f,q,fq->", model.m[fb], t.face_w, jb ** 2)
    )
    sc = model.region.skeleton_c
    rep.s_seminorm = math.sqrt(float(
        np.einsum("f,q,fq->", (model.M * sc)[fi], t.face_w, jint ** 2)
        + np.einsum("f,q,fq->", (model.M * sc)[fb], t.face_w, jb ** 2)
    ))
    rep.l2, rep.h1_semi, rep.jump_l2 = field_norms(t, coeffs)
    if model.problem.exact is not None:
        u = model.problem.exact(t.cell_x)
        rep.l2_error = math.sqrt(float(np.einsum("q,cq->", t.cell_w, (u - val) ** 2)))
        if model.problem.exact_grad is not None:
            du = model.problem.exact_grad(t.cell_x)
            rep.h1_semi_error = math.sqrt(float(np.einsum("q,cqk->", t.cell_w, (du - grad) ** 2)))
    return rep


def assemble(problem, cfg, region, r=1):
    """Assembled ``B + sigma S`` and ``l`` in dG dofs."""
    return NncfModel(problem, cfg, region, r).forms.system(cfg.sigma)


def solve_super_penalized(problem, cfg, region, r=1):
    return NncfModel(problem, cfg, region, r).solve_super_penalized()


def solve_cdg_direct(problem, cfg, region, r=1):
    return NncfModel(problem, cfg, region, r).solve_cdg_direct()
