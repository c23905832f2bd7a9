import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from penalimit.mesh import (
    BOTTOM,
    LEFT,
    LOCAL_NORMALS,
    RIGHT,
    TOP,
    FlowClass,
    build_uniform_mesh,
    classify_boundary,
    full_region,
    make_region,
)


@pytest.mark.parametrize("n,interior,boundary", [(1, 0, 4), (2, 4, 8)])
def test_small_counts(n, interior, boundary):
    m = build_uniform_mesh(n)
    assert m.n_cells == n * n
    assert m.interior_faces.size == interior
    assert m.boundary_faces.size == boundary


def test_rejects_empty_mesh():
    with pytest.raises(ValueError):
        build_uniform_mesh(0)


def test_face_h_n32():
    m = build_uniform_mesh(32)
    np.testing.assert_allclose(m.face_h, math.sqrt(2) / 32, rtol=1e-15)
    assert abs(m.face_h[0] - 4.4194e-2) < 1e-6


@pytest.mark.parametrize("n", list(range(1, 65)))
def test_counts_closed_form(n):
    m = build_uniform_mesh(n)
    assert m.n_faces == 2 * n * (n + 1)
    assert m.interior_faces.size == 2 * n * (n - 1)
    assert m.boundary_faces.size == 4 * n


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 12))
def test_face_cell_incidence(n):
    m = build_uniform_mesh(n)
    for side in (0, 1):
        cells = m.face_cells[:, side]
        ok = cells >= 0
        lf = m.face_local[ok, side]
        assert np.array_equal(m.cell_faces[cells[ok], lf], np.flatnonzero(ok))
    fi = m.interior_faces
    # plus normal points out of the plus cell, into the minus cell
    np.testing.assert_array_equal(LOCAL_NORMALS[m.face_local[fi, 0]], m.face_normal[fi])
    np.testing.assert_array_equal(LOCAL_NORMALS[m.face_local[fi, 1]], -m.face_normal[fi])
    fb = m.boundary_faces
    np.testing.assert_array_equal(LOCAL_NORMALS[m.face_local[fb, 0]], m.face_normal[fb])


def test_continuous_function_has_zero_jump():
    m = build_uniform_mesh(7)
    s = np.array([0.1, 0.5, 0.9])
    pts = m.face_points(s)
    fi = m.interior_faces

    def u(x):
        return np.sin(3 * x[..., 0]) * np.exp(x[..., 1])

    for f in fi[:20]:
        for side in (0, 1):
            c = m.face_cells[f, side]
            lf = m.face_local[f, side]
            from penalimit.mesh import local_face_points
            x = m.cell_points(local_face_points(lf, s))[c]
            np.testing.assert_allclose(x, pts[f], atol=1e-15)
            assert np.max(np.abs(u(x) - u(pts[f]))) < 1e-15


def test_vertical_faces_first_row_major():
    m = build_uniform_mesh(2)
    assert m.face_cells[1].tolist() == [0, 1]
    assert m.face_normal[1].tolist() == [1.0, 0.0]
    nv = 2 * 3
    assert m.face_cells[nv + 2].tolist() == [0, 2]
    assert m.face_normal[nv + 2].tolist() == [0.0, 1.0]
    assert m.cell_faces[3, LEFT] == 4 and m.cell_faces[3, RIGHT] == 5
    assert m.cell_faces[0, BOTTOM] == nv and m.cell_faces[0, TOP] == nv + 2


def _classes(m, b):
    cls = classify_boundary(m, lambda x: np.broadcast_to(np.asarray(b, float), np.shape(x)))
    mid = m.face_midpoint
    return cls, mid


def test_classify_diagonal_flow():
    m = build_uniform_mesh(4)
    cls, mid = _classes(m, (1.0, 1.0))
    fb = m.boundary_faces
    low = (np.isclose(mid[fb, 0], 0) | np.isclose(mid[fb, 1], 0))
    assert np.all(cls[fb][low] == FlowClass.INFLOW)
    assert np.all(cls[fb][~low] == FlowClass.OUTFLOW)
    assert np.all(cls[m.interior_faces] == FlowClass.INTERIOR)


def test_classify_ties_are_inflow():
    m = build_uniform_mesh(3)
    cls, _ = _classes(m, (0.0, 0.0))
    assert np.all(cls[m.boundary_faces] == FlowClass.INFLOW)
    cls, mid = _classes(m, (1.0, 0.0))
    fb = m.boundary_faces
    right = np.isclose(mid[fb, 0], 1)
    assert np.all(cls[fb][right] == FlowClass.OUTFLOW)
    assert np.all(cls[fb][~right] == FlowClass.INFLOW)


def test_classify_rejects_sign_change():
    m = build_uniform_mesh(1)
    with pytest.raises(ValueError):
        classify_boundary(m, lambda x: np.stack([x[..., 1] - 0.5, 0 * x[..., 1]], axis=-1))


def test_full_and_empty_regions():
    m = build_uniform_mesh(4)
    all_c = full_region(m, True)
    assert all_c.skeleton_c.all() and not all_c.interface.any()
    none_c = full_region(m, False)
    assert not none_c.skeleton_c.any() and none_c.skeleton_d.all()


def test_strip_region_counts():
    m = build_uniform_mesh(32)
    h = 1 / 32
    reg = make_region(m, lambda k, o: o[0] + h <= 1 - h + 1e-12 and o[1] + h <= 1 - h + 1e-12)
    assert int(reg.discontinuous.sum()) == 63
    # faces between the strip and the inner square: 31 vertical + 31 horizontal
    assert int(reg.interface.sum()) == 62
    fc = m.face_cells
    inner = fc[:, 1] >= 0
    mixed = inner & (reg.continuous[fc[:, 0]] != reg.continuous[np.maximum(fc[:, 1], 0)])
    assert np.array_equal(mixed, reg.interface)
    assert not (reg.interface & reg.skeleton_c).any()


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2 ** 31 - 1))
def test_region_invariants_random(n, seed):
    m = build_uniform_mesh(n)
    mask = np.random.default_rng(seed).random(m.n_cells) < 0.5
    reg = make_region(m, mask)
    assert np.array_equal(reg.continuous | reg.discontinuous, np.ones(m.n_cells, bool))
    assert not (reg.continuous & reg.discontinuous).any()
    assert np.array_equal(reg.skeleton_c | reg.skeleton_d, np.ones(m.n_faces, bool))
    assert not (reg.interface & ~reg.skeleton_d).any()
    fc = m.face_cells
    both = reg.continuous[fc[:, 0]] & np.where(fc[:, 1] < 0, True, reg.continuous[np.maximum(fc[:, 1], 0)])
    assert np.array_equal(both, reg.skeleton_c)
    assert np.array_equal(reg.bitmap(), (~mask).astype(np.uint8))
