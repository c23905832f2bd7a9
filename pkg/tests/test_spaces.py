import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from penalimit.darcy import DarcySolver, DarcyState, ImdParams
from penalimit.mesh import build_uniform_mesh, full_region, make_region
from penalimit.spaces import (
    Tables,
    build_constraints,
    build_dg_space,
    build_rt0_p0,
    identity_constraints,
    qr_basis,
)


@pytest.mark.parametrize("n,r,count", [(16, 1, 1024), (32, 1, 4096), (1, 2, 9)])
def test_dg_dof_counts(n, r, count):
    assert build_dg_space(build_uniform_mesh(n), r).n_dofs == count


def test_unsupported_degree():
    with pytest.raises(ValueError):
        build_dg_space(build_uniform_mesh(2), 3)


@pytest.mark.parametrize("r", [1, 2])
def test_basis_is_nodal_partition_of_unity(r):
    t = np.linspace(0, 1, r + 1)
    nodes = np.array([(x, y) for y in t for x in t])
    val, grad = qr_basis(r, nodes)
    np.testing.assert_allclose(val, np.eye((r + 1) ** 2), atol=1e-15)
    pts = np.random.default_rng(0).random((20, 2))
    val, grad = qr_basis(r, pts)
    np.testing.assert_allclose(val.sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-13)


def test_empty_region_gives_identity():
    dm = build_dg_space(build_uniform_mesh(3), 1)
    cons = build_constraints(dm, full_region(dm.mesh, False), dirichlet=True)
    assert cons.n_free == dm.n_dofs
    assert (cons.prolongation != identity_constraints(dm).prolongation).nnz == 0


def test_full_region_dirichlet_interior_vertices():
    dm = build_dg_space(build_uniform_mesh(32), 1)
    assert build_constraints(dm, full_region(dm.mesh, True), dirichlet=True).n_free == 31 ** 2


def test_left_column_neumann():
    # 2x2 mesh, T_C = cells 0 and 2 (x < 1/2).  Their shared face is y = 1/2,
    # x in [0, 1/2]: its two end nodes merge, nothing else does.
    m = build_uniform_mesh(2)
    dm = build_dg_space(m, 1)
    reg = make_region(m, lambda k, o: o[0] < 0.25)
    cons = build_constraints(dm, reg, dirichlet=False)
    assert cons.n_free == 16 - 2
    ptp = (cons.prolongation.T @ cons.prolongation).diagonal()
    assert sorted(ptp.tolist()) == [1.0] * 12 + [2.0, 2.0]
    merged = cons.prolongation[:, np.flatnonzero(ptp == 2)].tocsc()
    lat = dm.node_lattice
    for k in range(merged.shape[1]):
        rows = merged[:, k].indices
        assert len({tuple(lat[r]) for r in rows}) == 1
        assert {int(r) // 4 for r in rows} == {0, 2}
        assert lat[rows[0], 1] == 1
    assert cons.eliminated.size == 0


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.sampled_from([1, 2]), st.booleans(), st.integers(0, 2 ** 31 - 1))
def test_prolonged_fields_continuous_on_continuous_skeleton(n, r, dirichlet, seed):
    m = build_uniform_mesh(n)
    rng = np.random.default_rng(seed)
    reg = make_region(m, rng.random(m.n_cells) < 0.6)
    dm = build_dg_space(m, r)
    cons = build_constraints(dm, reg, dirichlet=dirichlet)
    ptp = (cons.prolongation.T @ cons.prolongation).toarray()
    assert np.count_nonzero(ptp - np.diag(np.diag(ptp))) == 0
    assert (np.diag(ptp) >= 1).all()
    assert cons.prolongation.sum(axis=1).max() <= 1
    t = Tables(dm)
    x = cons.prolong(rng.standard_normal(cons.n_free))
    plus, minus = t.interior_traces(x)
    sc = reg.skeleton_c[t.fi]
    assert np.max(np.abs(plus - minus)[sc], initial=0.0) < 1e-12
    if dirichlet:
        bc = reg.skeleton_c[t.fb]
        assert np.max(np.abs(t.boundary_traces(x))[bc], initial=0.0) < 1e-12


@pytest.mark.parametrize("n,nrt,np0", [(1, 4, 1), (16, 544, 256)])
def test_rt0_counts(n, nrt, np0):
    rt, p0 = build_rt0_p0(build_uniform_mesh(n))
    assert (rt.n_dofs, p0.n_dofs) == (nrt, np0)


def _darcy(n):
    m = build_uniform_mesh(n)
    return DarcySolver(Tables(build_dg_space(m, 1)), ImdParams(n=n))


def test_rt0_reproduces_constant_field():
    solver = _darcy(4)
    m = solver.mesh
    u = np.array([1.0, 0.0])
    state = DarcyState(m.face_normal @ u, np.zeros(m.n_cells))
    np.testing.assert_allclose(solver.cell_velocity(state), np.broadcast_to(u, (m.n_cells, 9, 2)), atol=1e-14)


def test_rt0_normal_continuity():
    solver = _darcy(5)
    m = solver.mesh
    state = DarcyState(np.random.default_rng(3).standard_normal(m.n_faces), np.zeros(m.n_cells))
    fi = m.interior_faces
    nrm = m.face_normal[fi]
    up = np.einsum("fqk,fk->fq", solver.face_velocity(state, fi, 0), nrm)
    um = np.einsum("fqk,fk->fq", solver.face_velocity(state, fi, 1), nrm)
    np.testing.assert_allclose(up, um, atol=1e-13)
    np.testing.assert_allclose(up, state.velocity[fi][:, None] * np.ones_like(up), atol=1e-13)
