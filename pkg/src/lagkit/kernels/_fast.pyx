# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled activation-stage kernels; see _numpy.py for the reference.

The payoff over numpy is fusing the elementwise softplus algebra with the
(m x m) outer products into single passes, avoiding the large temporaries
the broadcasting formulation allocates."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p

cnp.import_array()


cdef inline double _softplus(double z) noexcept nogil:
    if z > 0.0:
        return z + log1p(exp(-z))
    return log1p(exp(z))


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def softplus_fwd1(double[:, ::1] Z, double[:, :, ::1] JZ):
    cdef Py_ssize_t B = Z.shape[0], K = Z.shape[1], M = JZ.shape[2]
    V_arr = np.empty((B, K))
    J_arr = np.empty((B, K, M))
    S1_arr = np.empty((B, K))
    cdef double[:, ::1] V = V_arr
    cdef double[:, :, ::1] J = J_arr
    cdef double[:, ::1] S1 = S1_arr
    cdef Py_ssize_t b, k, i
    cdef double s1
    with nogil:
        for b in range(B):
            for k in range(K):
                s1 = _sigmoid(Z[b, k])
                S1[b, k] = s1
                V[b, k] = _softplus(Z[b, k])
                for i in range(M):
                    J[b, k, i] = s1 * JZ[b, k, i]
    return V_arr, J_arr, S1_arr


def softplus_bwd1(double[:, ::1] VB, double[:, :, ::1] JB,
                  double[:, :, ::1] JZ, double[:, ::1] S1):
    cdef Py_ssize_t B = VB.shape[0], K = VB.shape[1], M = JB.shape[2]
    ZB_arr = np.empty((B, K))
    JZB_arr = np.empty((B, K, M))
    cdef double[:, ::1] ZB = ZB_arr
    cdef double[:, :, ::1] JZB = JZB_arr
    cdef Py_ssize_t b, k, i
    cdef double s1, s2, acc
    with nogil:
        for b in range(B):
            for k in range(K):
                s1 = S1[b, k]
                s2 = s1 * (1.0 - s1)
                acc = 0.0
                for i in range(M):
                    acc += JB[b, k, i] * JZ[b, k, i]
                    JZB[b, k, i] = s1 * JB[b, k, i]
                ZB[b, k] = VB[b, k] * s1 + s2 * acc
    return ZB_arr, JZB_arr


def softplus_fwd2(double[:, ::1] Z, double[:, :, ::1] JZ,
                  double[:, :, :, ::1] HZ):
    cdef Py_ssize_t B = Z.shape[0], K = Z.shape[1], M = JZ.shape[2]
    V_arr = np.empty((B, K))
    J_arr = np.empty((B, K, M))
    H_arr = np.empty((B, K, M, M))
    S1_arr = np.empty((B, K))
    S2_arr = np.empty((B, K))
    cdef double[:, ::1] V = V_arr
    cdef double[:, :, ::1] J = J_arr
    cdef double[:, :, :, ::1] H = H_arr
    cdef double[:, ::1] S1 = S1_arr
    cdef double[:, ::1] S2 = S2_arr
    cdef Py_ssize_t b, k, i, j
    cdef double s1, s2, ji
    with nogil:
        for b in range(B):
            for k in range(K):
                s1 = _sigmoid(Z[b, k])
                s2 = s1 * (1.0 - s1)
                S1[b, k] = s1
                S2[b, k] = s2
                V[b, k] = _softplus(Z[b, k])
                for i in range(M):
                    ji = JZ[b, k, i]
                    J[b, k, i] = s1 * ji
                    for j in range(M):
                        H[b, k, i, j] = s1 * HZ[b, k, i, j] + s2 * ji * JZ[b, k, j]
    return V_arr, J_arr, H_arr, S1_arr, S2_arr


def softplus_bwd2(double[:, ::1] VB, double[:, :, ::1] JB,
                  double[:, :, :, ::1] HB, double[:, :, ::1] JZ,
                  double[:, :, :, ::1] HZ, double[:, ::1] S1,
                  double[:, ::1] S2):
    cdef Py_ssize_t B = VB.shape[0], K = VB.shape[1], M = JB.shape[2]
    ZB_arr = np.empty((B, K))
    JZB_arr = np.empty((B, K, M))
    HZB_arr = np.empty((B, K, M, M))
    cdef double[:, ::1] ZB = ZB_arr
    cdef double[:, :, ::1] JZB = JZB_arr
    cdef double[:, :, :, ::1] HZB = HZB_arr
    cdef Py_ssize_t b, k, i, j
    cdef double s1, s2, s3, zb, acc_j, acc_hh, acc_hjj, hj, jh
    with nogil:
        for b in range(B):
            for k in range(K):
                s1 = S1[b, k]
                s2 = S2[b, k]
                s3 = s2 * (1.0 - 2.0 * s1)
                acc_j = 0.0
                acc_hh = 0.0
                acc_hjj = 0.0
                for i in range(M):
                    acc_j += JB[b, k, i] * JZ[b, k, i]
                    hj = 0.0
                    jh = 0.0
                    for j in range(M):
                        hj += HB[b, k, i, j] * JZ[b, k, j]
                        jh += HB[b, k, j, i] * JZ[b, k, j]
                        acc_hh += HB[b, k, i, j] * HZ[b, k, i, j]
                        HZB[b, k, i, j] = s1 * HB[b, k, i, j]
                    acc_hjj += hj * JZ[b, k, i]
                    JZB[b, k, i] = s1 * JB[b, k, i] + s2 * (hj + jh)
                ZB[b, k] = VB[b, k] * s1 + s2 * acc_j + s2 * acc_hh + s3 * acc_hjj
    return ZB_arr, JZB_arr, HZB_arr
