"""Element-loop kernels for P1 assembly.

Each kernel has a pure-numpy implementation and a numba @njit loop
implementation; the active path is chosen at import time. Setting the
environment variable IRKPREC_NO_NUMBA=1 forces the numpy path (it is also
used automatically when numba is not importable). benchmarks/bench_kernels.py
compares the two.
"""

import os

import numpy as np

_DISABLE = os.environ.get("IRKPREC_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

if not _DISABLE:
    try:
        from numba import njit
    except ImportError:
        njit = None
else:
    njit = None


def using_numba():
    return njit is not None


def tri_geometry_numpy(xy):
    """Signed areas and P1 basis gradients for triangles xy (T, 3, 2)."""
    e1 = xy[:, 1] - xy[:, 0]
    e2 = xy[:, 2] - xy[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * det
    grads = np.empty_like(xy)
    grads[:, 1, 0] = e2[:, 1] / det
    grads[:, 1, 1] = -e2[:, 0] / det
    grads[:, 2, 0] = -e1[:, 1] / det
    grads[:, 2, 1] = e1[:, 0] / det
    grads[:, 0] = -grads[:, 1] - grads[:, 2]
    return area, grads


def _tri_geometry_loop(xy):
    T = xy.shape[0]
    area = np.empty(T)
    grads = np.empty((T, 3, 2))
    for t in range(T):
        e1x = xy[t, 1, 0] - xy[t, 0, 0]
        e1y = xy[t, 1, 1] - xy[t, 0, 1]
        e2x = xy[t, 2, 0] - xy[t, 0, 0]
        e2y = xy[t, 2, 1] - xy[t, 0, 1]
        det = e1x * e2y - e1y * e2x
        area[t] = 0.5 * det
        grads[t, 1, 0] = e2y / det
        grads[t, 1, 1] = -e2x / det
        grads[t, 2, 0] = -e1y / det
        grads[t, 2, 1] = e1x / det
        grads[t, 0, 0] = -grads[t, 1, 0] - grads[t, 2, 0]
        grads[t, 0, 1] = -grads[t, 1, 1] - grads[t, 2, 1]
    return area, grads


def stiffness_local_numpy(area, grads, alpha_q, beta_q, phi, qw):
    """Local matrices of the bilinear form alpha grad.grad + beta id.id.

    alpha_q, beta_q: coefficient values at the mapped quadrature points,
    shape (T, Q); phi: reference P1 values (Q, 3); qw sums to 1, so the
    element integral is area * sum_q qw[q] * f(x_q).
    """
    abar = alpha_q @ qw
    gdot = np.einsum("tix,tjx->tij", grads, grads)
    S = (area * abar)[:, None, None] * gdot
    wb = beta_q * qw
    S += area[:, None, None] * np.einsum("tq,qi,qj->tij", wb, phi, phi)
    return S


def _stiffness_local_loop(area, grads, alpha_q, beta_q, phi, qw):
    T, Q = alpha_q.shape
    S = np.empty((T, 3, 3))
    for t in range(T):
        abar = 0.0
        for q in range(Q):
            abar += qw[q] * alpha_q[t, q]
        for i in range(3):
            for j in range(i, 3):
                g = grads[t, i, 0] * grads[t, j, 0] + grads[t, i, 1] * grads[t, j, 1]
                m = 0.0
                for q in range(Q):
                    m += qw[q] * beta_q[t, q] * phi[q, i] * phi[q, j]
                v = area[t] * (abar * g + m)
                S[t, i, j] = v
                S[t, j, i] = v
    return S


def load_local_numpy(area, f_q, phi, qw):
    """Local load vectors of <f, phi_i>; f_q shape (T, Q)."""
    return area[:, None] * np.einsum("tq,q,qi->ti", f_q, qw, phi)


def _load_local_loop(area, f_q, phi, qw):
    T, Q = f_q.shape
    out = np.empty((T, 3))
    for t in range(T):
        for i in range(3):
            acc = 0.0
            for q in range(Q):
                acc += f_q[t, q] * qw[q] * phi[q, i]
            out[t, i] = area[t] * acc
    return out


if njit is not None:
    tri_geometry_jit = njit(cache=True)(_tri_geometry_loop)
    stiffness_local_jit = njit(cache=True)(_stiffness_local_loop)
    load_local_jit = njit(cache=True)(_load_local_loop)
    tri_geometry = tri_geometry_jit
    stiffness_local = stiffness_local_jit
    load_local = load_local_jit
else:
    tri_geometry_jit = None
    stiffness_local_jit = None
    load_local_jit = None
    tri_geometry = tri_geometry_numpy
    stiffness_local = stiffness_local_numpy
    load_local = load_local_numpy
