# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled transport element kernels; same contract as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def transport_cell_blocks(const double[::1] w, const double[:, ::1] phi,
                          const double[:, :, ::1] dphi, const double[:, :, :, ::1] D,
                          const double[:, :, ::1] u, const double[::1] qsum):
    cdef Py_ssize_t nc = D.shape[0], nq = w.shape[0], nl = phi.shape[1]
    cdef Py_ssize_t c, q, i, j
    cdef double wq, gi0, gi1, gj0, gj1, dgj0, dgj1, ugi, ugj, qs
    vol_d_arr = np.zeros((nc, nl, nl))
    vol_cq_arr = np.zeros((nc, nl, nl))
    cdef double[:, :, ::1] vol_d = vol_d_arr
    cdef double[:, :, ::1] vol_cq = vol_cq_arr
    with nogil:
        for c in range(nc):
            qs = qsum[c]
            for q in range(nq):
                wq = w[q]
                for j in range(nl):
                    gj0 = dphi[q, j, 0]
                    gj1 = dphi[q, j, 1]
                    dgj0 = D[c, q, 0, 0] * gj0 + D[c, q, 0, 1] * gj1
                    dgj1 = D[c, q, 1, 0] * gj0 + D[c, q, 1, 1] * gj1
                    ugj = u[c, q, 0] * gj0 + u[c, q, 1] * gj1
                    for i in range(nl):
                        gi0 = dphi[q, i, 0]
                        gi1 = dphi[q, i, 1]
                        ugi = u[c, q, 0] * gi0 + u[c, q, 1] * gi1
                        vol_d[c, i, j] += wq * (dgj0 * gi0 + dgj1 * gi1)
                        vol_cq[c, i, j] += 0.5 * wq * (ugj * phi[q, i] - phi[q, j] * ugi
                                                       + qs * phi[q, j] * phi[q, i])
    return vol_d_arr, vol_cq_arr


def transport_face_blocks(const double[::1] wf, const double[:, :, ::1] jmp,
                          const double[:, :, ::1] avg, const double[:, ::1] m,
                          const double[:, ::1] beta, const double[:, :, ::1] up,
                          const double[:, :, ::1] down, const double[::1] ms):
    cdef Py_ssize_t nf = jmp.shape[0], nq = wf.shape[0], nl = jmp.shape[2]
    cdef Py_ssize_t f, q, i, j
    cdef double wq, ji, jj, wb
    face_d_arr = np.zeros((nf, nl, nl))
    face_cq_arr = np.zeros((nf, nl, nl))
    face_s_arr = np.zeros((nf, nl, nl))
    cdef double[:, :, ::1] face_d = face_d_arr
    cdef double[:, :, ::1] face_cq = face_cq_arr
    cdef double[:, :, ::1] face_s = face_s_arr
    with nogil:
        for f in range(nf):
            for q in range(nq):
                wq = wf[q]
                wb = 0.5 * wq * beta[f, q]
                for i in range(nl):
                    ji = jmp[f, q, i]
                    for j in range(nl):
                        jj = jmp[f, q, j]
                        face_d[f, i, j] += wq * (m[f, q] * ji * jj - ji * avg[f, q, j] - avg[f, q, i] * jj)
                        face_cq[f, i, j] += wb * (ji * up[f, q, j] - down[f, q, i] * jj)
                        face_s[f, i, j] += wq * ji * jj
            for i in range(nl):
                for j in range(nl):
                    face_s[f, i, j] *= ms[f]
    return face_d_arr, face_cq_arr, face_s_arr
