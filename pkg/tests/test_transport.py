import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from penalimit.darcy import DarcyState, ImdParams
from penalimit.mesh import full_region, make_region
from penalimit.transport import ImdModel, assemble_transport, dispersion, penalty_m_imd

P = ImdParams()


def test_dispersion_at_rest():
    np.testing.assert_allclose(dispersion(np.zeros(2), P), 1.8e-7 * np.eye(2), rtol=1e-15)


def test_dispersion_unit_x():
    np.testing.assert_allclose(dispersion(np.array([1.0, 0.0]), P), np.diag([1.818e-5, 1.98e-6]), rtol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_dispersion_spectrum(ux, uy):
    u = np.array([ux, uy])
    s = np.hypot(ux, uy)
    lam = np.linalg.eigvalsh(dispersion(u, P))
    expected = sorted([P.porosity * (P.d_m + s * P.d_l), P.porosity * (P.d_m + s * P.d_t)])
    np.testing.assert_allclose(lam, expected, rtol=1e-12, atol=1e-22)


def test_dispersion_spd_many():
    u = np.random.default_rng(0).standard_normal((1000, 2)) * 3
    lam = np.linalg.eigvalsh(dispersion(u, P))
    assert lam.min() >= P.porosity * P.d_m - 1e-15


def test_penalty_example_and_scaling():
    d = dispersion(np.zeros((1, 2, 2)), P)
    nrm = np.array([[1.0, 0.0]])
    h = np.array([math.sqrt(2) / 16])
    m = penalty_m_imd(d, d, nrm, h, 10.0)
    np.testing.assert_allclose(m, math.sqrt(10 * 1.8e-7 * 16 / math.sqrt(2)), rtol=1e-14)
    assert abs(m[0, 0] - 4.513e-3) < 1e-6
    np.testing.assert_allclose(penalty_m_imd(4 * d, 4 * d, nrm, h, 10.0), 2 * m, rtol=1e-14)
    np.testing.assert_allclose(penalty_m_imd(d, None, nrm, h, 10.0), m, rtol=1e-15)
    big = dispersion(np.array([[[1.0, 0.0], [1.0, 0.0]]]), P)
    np.testing.assert_allclose(penalty_m_imd(d, big, nrm, h, 10.0), penalty_m_imd(big, None, nrm, h, 10.0))


@pytest.fixture(scope="module")
def small():
    return ImdModel(ImdParams(n=4))


def random_state(model, seed, scale=0.2):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(model.mesh.n_faces) * scale
    u[model.mesh.boundary_faces] = 0.0
    return DarcyState(u, np.zeros(model.mesh.n_cells))


def test_no_flow_no_wells_reduces_to_dispersion():
    model = ImdModel(ImdParams(n=4, well_rate=0.0))
    state = DarcyState(np.zeros(model.mesh.n_faces), np.zeros(model.mesh.n_cells))
    forms = model.forms(state, full_region(model.mesh, False))
    assert abs(forms.B_cq).max() < 1e-18
    sys = assemble_transport(model, np.zeros(model.dofmap.n_dofs), state, full_region(model.mesh, False), 0.0)
    ref = (forms.mass / model.params.dt + forms.B_d).toarray()
    np.testing.assert_allclose(sys.matrix.toarray(), ref, atol=1e-15)
    # pure molecular diffusion: the volume part is phi d_m times the Laplacian
    c = np.random.default_rng(0).standard_normal(model.dofmap.n_dofs)
    grad = model.tables.cell_grads(c)
    vol = P.porosity * P.d_m * np.einsum("q,cqk->", model.tables.cell_w, grad ** 2)
    rep = model.triple_norm(c, state, full_region(model.mesh, False))
    assert abs(rep.dispersion - vol) < 1e-12 * vol


def test_zero_data_gives_zero(small):
    model = ImdModel(ImdParams(n=4, c_hat=0.0))
    state = model.initial_state()
    nxt = model.step(state)
    assert np.all(nxt.c == 0)


@pytest.mark.parametrize("seed", range(5))
def test_bcq_semidefinite(small, seed):
    state = random_state(small, seed)
    region = make_region(small.mesh, np.random.default_rng(seed).random(16) < 0.5)
    forms = small.forms(state, region)
    rng = np.random.default_rng(100 + seed)
    for _ in range(20):
        d = rng.standard_normal(small.dofmap.n_dofs)
        val = d @ (forms.B_cq @ d)
        rep = small.triple_norm(d, state, region)
        assert val >= -1e-12
        assert abs(val - (rep.wells + rep.advective_jump)) <= 1e-12 * max(1.0, val)


def test_s_on_continuous_skeleton_only(small):
    state = random_state(small, 0)
    region = make_region(small.mesh, lambda k, o: o[0] < 0.5)
    forms = small.forms(state, region)
    rng = np.random.default_rng(4)
    x = rng.standard_normal(small.dofmap.n_dofs)
    rep = small.triple_norm(x, state, region)
    assert abs(x @ (forms.S @ x) - rep.s_seminorm ** 2) < 1e-12 * rep.s_seminorm ** 2
    empty = small.forms(state, full_region(small.mesh, False))
    assert empty.S.nnz == 0 or abs(empty.S).max() == 0


def test_first_step_sees_unit_viscosity(small):
    st0 = small.initial_state()
    s1 = small.step(st0)
    ref = small.darcy.solve(np.zeros(small.dofmap.n_dofs))
    np.testing.assert_array_equal(s1.darcy.velocity, ref.velocity)


def test_zero_wells_stay_zero():
    model = ImdModel(ImdParams(n=4, well_rate=0.0))
    res = model.run("dg", n_steps=5, keep_history=True)
    assert all(np.all(c == 0) for c in res.history)
    assert all(d["mass"] == 0 and d["energy"] == 0 for d in res.diagnostics)


def test_energy_decay_without_injection():
    model = ImdModel(ImdParams(n=6, c_hat=0.0))
    c0 = np.random.default_rng(5).random(model.dofmap.n_dofs)
    res = model.run("dg", n_steps=20, c0=c0)
    e = [math.sqrt(model.params.porosity) * model.l2_norm(c0)] + [d["energy"] for d in res.diagnostics]
    assert all(b <= a * (1 + 1e-13) for a, b in zip(e, e[1:]))


def test_mass_balance_with_injection():
    # early on the producer sees no solute, so the mass grows at rate c_hat * q
    model = ImdModel(ImdParams(n=8))
    res = model.run("dg", n_steps=10)
    mass = res.diagnostics[-1]["mass"]
    assert abs(mass - 10 * model.params.dt * 0.018) < 1e-6 * mass


def test_cdg_mode_is_continuous_and_counts_dofs():
    model = ImdModel(ImdParams(n=4))
    region = make_region(model.mesh, lambda k, o: o[1] < 0.5)
    res = model.run("cdg", region=region, n_steps=3, keep_history=True)
    t = model.tables
    plus, minus = t.interior_traces(res.history[-1])
    assert np.max(np.abs(plus - minus)[region.skeleton_c[t.fi]]) < 1e-13
    # two rows of 4 continuous cells: a 5 x 3 vertex lattice plus 8 dG cells
    assert res.diagnostics[0]["dofs"] == 15 + 8 * 4


def test_super_penalty_tends_to_cdg():
    model = ImdModel(ImdParams(n=4, T=0.02))
    cg = model.run("cdg", keep_history=True)
    dist = [model.run("super", sigma=s, reference=cg.history).l2l2_distance for s in (1e4, 1e6)]
    assert 0.005 < dist[1] / dist[0] < 0.02


def test_run_validation():
    model = ImdModel(ImdParams(n=2, T=0.008))
    with pytest.raises(ValueError):
        model.run("bogus")
    with pytest.raises(ValueError):
        model.run("adaptive")
