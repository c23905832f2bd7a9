import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from penalimit.adapt import AdaptPolicy, face_jump_indicator, schedule, select_region
from penalimit.darcy import ImdParams
from penalimit.mesh import build_uniform_mesh, full_region
from penalimit.spaces import Tables, build_constraints, build_dg_space
from penalimit.transport import ImdModel


@pytest.fixture(scope="module")
def tables():
    return Tables(build_dg_space(build_uniform_mesh(6), 1))


def test_policy_validation():
    with pytest.raises(ValueError):
        AdaptPolicy(0.0)
    with pytest.raises(ValueError):
        AdaptPolicy(1e-3, period=0)


def test_continuous_field_zero_interior_indicator(tables):
    dm = tables.dofmap
    cons = build_constraints(dm, full_region(dm.mesh, True), dirichlet=False)
    x = cons.prolong(np.random.default_rng(0).standard_normal(cons.n_free))
    eta = face_jump_indicator(tables, x)
    assert np.max(eta[tables.fi]) < 1e-14
    assert select_region(dm.mesh, eta, 1e-12).continuous.all()


def test_zero_field(tables):
    assert np.all(face_jump_indicator(tables, np.zeros(tables.dofmap.n_dofs)) == 0)


def test_single_cell_indicator(tables):
    dm = tables.dofmap
    x = np.zeros(dm.n_dofs)
    cell = 14
    x[dm.cell_dofs[cell]] = 1.0
    eta = face_jump_indicator(tables, x)
    ell = dm.mesh.side
    np.testing.assert_allclose(eta[dm.mesh.cell_faces[cell]], math.sqrt(ell), rtol=1e-14)
    others = np.setdiff1d(np.arange(dm.mesh.n_faces), dm.mesh.cell_faces[cell])
    assert np.all(eta[others] == 0)


def test_one_face_jump_selects_its_cells():
    m = build_uniform_mesh(5)
    eta = np.zeros(m.n_faces)
    f = m.interior_faces[7]
    eta[f] = 1.0
    reg = select_region(m, eta, 1e-8)
    assert sorted(np.flatnonzero(reg.discontinuous).tolist()) == sorted(m.face_cells[f].tolist())


def test_strict_threshold_and_boundary_switch():
    m = build_uniform_mesh(3)
    eta = np.zeros(m.n_faces)
    eta[m.boundary_faces[0]] = 0.5
    assert select_region(m, eta, 0.5).continuous.all()
    reg = select_region(m, eta, 0.5, include_boundary=True)
    assert reg.discontinuous.sum() == 1
    eta[m.interior_faces[0]] = 0.5
    assert select_region(m, eta, 0.5).discontinuous.sum() == 2
    assert select_region(m, eta, 0.5000001).continuous.all()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(1e-3, 1.0), st.floats(1e-3, 1.0))
def test_monotone_in_tol(seed, t1, t2):
    m = build_uniform_mesh(5)
    eta = np.random.default_rng(seed).random(m.n_faces)
    lo, hi = sorted([t1, t2])
    a = select_region(m, eta, lo).continuous
    b = select_region(m, eta, hi).continuous
    assert not (a & ~b).any()
    assert np.array_equal(a, select_region(m, eta, lo).continuous)


def test_schedule():
    pol = AdaptPolicy(1e-4)
    resets = [j for j in range(1, 17) if schedule(j, pol)]
    assert resets == [1, 6, 11, 16]
    off = AdaptPolicy(1e-4, enabled=False)
    assert all(schedule(j, off) for j in range(1, 10))


def test_adaptive_run_uses_held_region():
    model = ImdModel(ImdParams(n=6, T=0.04))
    res = model.run("adaptive", policy=AdaptPolicy(1e-4))
    dofs = [d["dofs"] for d in res.diagnostics]
    assert dofs[0] == dofs[5] == model.dofmap.n_dofs
    assert all(d < model.dofmap.n_dofs for d in dofs[1:5])
    assert res.diagnostics[1]["continuous_cells"] > 0
    disabled = model.run("adaptive", policy=AdaptPolicy(1e-4, enabled=False))
    assert disabled.total_dofs == 10 * model.dofmap.n_dofs
