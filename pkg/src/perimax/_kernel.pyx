# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Runge-Kutta stepping kernel.

Arithmetic matches _kernel_py.segment_propagate exactly: classical
fourth-order Runge-Kutta with two substeps of size h/2 per grid step,
stage data on a mesh of spacing h/4, joint propagation of the fundamental
matrix and an optional forced particular solution.
"""
import numpy as np

ctypedef double complex cplx

BACKEND = "compiled"


cdef inline void _mat_rhs(cplx[:, :] F, cplx[:, :] W, cplx[:, :] out, int d) noexcept nogil:
    cdef int i, j, k
    cdef cplx s
    for i in range(d):
        for j in range(d):
            s = 0
            for k in range(d):
                s = s + F[i, k] * W[k, j]
            out[i, j] = s


cdef inline void _mat_blend(cplx[:, :] W, double a, cplx[:, :] K, cplx[:, :] out, int d) noexcept nogil:
    cdef int i, j
    for i in range(d):
        for j in range(d):
            out[i, j] = W[i, j] + a * K[i, j]


cdef inline void _vec_rhs(cplx[:, :] F, cplx[:] p, cplx[:] g, cplx[:] out, int d) noexcept nogil:
    cdef int i, k
    cdef cplx s
    for i in range(d):
        s = g[i]
        for k in range(d):
            s = s + F[i, k] * p[k]
        out[i] = s


cdef inline void _vec_blend(cplx[:] p, double a, cplx[:] q, cplx[:] out, int d) noexcept nogil:
    cdef int i
    for i in range(d):
        out[i] = p[i] + a * q[i]


def segment_propagate(F_in, g_in, double h):
    """Propagate W' = F(t) W, W(0) = I (and psi' = F psi + g, psi(0) = 0).

    See the pure-python reference implementation for the full contract.
    """
    F_arr = np.ascontiguousarray(F_in, dtype=complex)
    cdef int nstage = F_arr.shape[0]
    if nstage < 5 or (nstage - 1) % 4:
        raise ValueError(f"stage count must be 4K+1 with K >= 1, got {nstage}")
    cdef int nout = (nstage - 1) // 4
    cdef int d = F_arr.shape[1]
    cdef bint forced = g_in is not None

    cdef cplx[:, :, :] F = F_arr
    cdef cplx[:, :] g = None

    Phi_arr = np.empty((nout + 1, d, d), dtype=complex)
    W_arr = np.eye(d, dtype=complex)
    Phi_arr[0] = W_arr
    cdef cplx[:, :, :] Phi = Phi_arr
    cdef cplx[:, :] W = W_arr

    psi_arr = None
    p_arr = None
    cdef cplx[:, :] psi = None
    cdef cplx[:] p = None
    if forced:
        g_arr = np.ascontiguousarray(g_in, dtype=complex)
        if g_arr.shape[0] != nstage or g_arr.shape[1] != d:
            raise ValueError("forcing stages must match matrix stages")
        g = g_arr
        psi_arr = np.zeros((nout + 1, d), dtype=complex)
        p_arr = np.zeros(d, dtype=complex)
        psi = psi_arr
        p = p_arr

    scratch = [np.empty((d, d), dtype=complex) for _ in range(5)]
    cdef cplx[:, :] K1 = scratch[0]
    cdef cplx[:, :] K2 = scratch[1]
    cdef cplx[:, :] K3 = scratch[2]
    cdef cplx[:, :] K4 = scratch[3]
    cdef cplx[:, :] T = scratch[4]
    vscratch = [np.empty(d, dtype=complex) for _ in range(5)]
    cdef cplx[:] q1 = vscratch[0]
    cdef cplx[:] q2 = vscratch[1]
    cdef cplx[:] q3 = vscratch[2]
    cdef cplx[:] q4 = vscratch[3]
    cdef cplx[:] tp = vscratch[4]

    cdef double hh = 0.5 * h
    cdef double sixth = hh / 6.0
    cdef int j, i0, a, b, rec

    for j in range(2 * nout):
        i0 = 2 * j
        _mat_rhs(F[i0], W, K1, d)
        _mat_blend(W, 0.5 * hh, K1, T, d)
        _mat_rhs(F[i0 + 1], T, K2, d)
        _mat_blend(W, 0.5 * hh, K2, T, d)
        _mat_rhs(F[i0 + 1], T, K3, d)
        _mat_blend(W, hh, K3, T, d)
        _mat_rhs(F[i0 + 2], T, K4, d)
        for a in range(d):
            for b in range(d):
                W[a, b] = W[a, b] + sixth * (
                    K1[a, b] + 2.0 * K2[a, b] + 2.0 * K3[a, b] + K4[a, b]
                )
        if forced:
            _vec_rhs(F[i0], p, g[i0], q1, d)
            _vec_blend(p, 0.5 * hh, q1, tp, d)
            _vec_rhs(F[i0 + 1], tp, g[i0 + 1], q2, d)
            _vec_blend(p, 0.5 * hh, q2, tp, d)
            _vec_rhs(F[i0 + 1], tp, g[i0 + 1], q3, d)
            _vec_blend(p, hh, q3, tp, d)
            _vec_rhs(F[i0 + 2], tp, g[i0 + 2], q4, d)
            for a in range(d):
                p[a] = p[a] + sixth * (q1[a] + 2.0 * q2[a] + 2.0 * q3[a] + q4[a])
        if j % 2 == 1:
            rec = j // 2 + 1
            for a in range(d):
                for b in range(d):
                    Phi[rec, a, b] = W[a, b]
            if forced:
                for a in range(d):
                    psi[rec, a] = p[a]

    return Phi_arr, psi_arr
