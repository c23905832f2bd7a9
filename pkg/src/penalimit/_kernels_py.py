"""Reference numpy implementation of the transport element kernels.

Shapes: ``w`` (nq,), ``phi`` (nq, nl), ``dphi`` (nq, nl, 2), ``D`` (nc, nq, 2, 2),
``u`` (nc, nq, 2), ``qsum`` (nc,); face arrays carry the two-sided local
numbering of length ``2 nl`` in their last axis.  Row index = test function.
"""
import numpy as np


def transport_cell_blocks(w, phi, dphi, D, u, qsum):
    ddphi = np.einsum("cqkl,qjl->cqjk", D, dphi)
    vol_d = np.einsum("q,cqjk,qik->cij", w, ddphi, dphi, optimize=True)
    wphi = w[:, None] * phi
    ugrad = np.einsum("cqk,qjk->cqj", u, dphi)
    adv = np.einsum("qi,cqj->cij", wphi, ugrad, optimize=True)
    mass = wphi.T @ phi
    vol_cq = 0.5 * (adv - adv.transpose(0, 2, 1) + qsum[:, None, None] * mass[None])
    return vol_d, vol_cq


def transport_face_blocks(wf, jmp, avg, m, beta, up, down, ms):
    wj = wf[None, :, None] * jmp
    jj = np.einsum("fqi,fqj->fij", wj, jmp, optimize=True)
    mj = np.einsum("fqi,fq,fqj->fij", wj, m, jmp, optimize=True)
    ja = np.einsum("fqi,fqj->fij", wj, avg, optimize=True)
    face_d = mj - ja - ja.transpose(0, 2, 1)
    bj = wj * beta[:, :, None]
    face_cq = 0.5 * (np.einsum("fqi,fqj->fij", bj, up, optimize=True)
                     - np.einsum("fqi,fqj->fij", down, bj, optimize=True))
    face_s = ms[:, None, None] * jj
    return face_d, face_cq, face_s
