# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def class_moments(P_cfg, bits, config_class, Py_ssize_t n_classes, phi):
    cdef double[:, ::1] P = np.ascontiguousarray(P_cfg, dtype=np.float64)
    cdef long long[:, ::1] B = np.ascontiguousarray(bits, dtype=np.int64)
    cdef long long[::1] cls = np.ascontiguousarray(config_class, dtype=np.int64)
    cdef double[::1] ph = np.ascontiguousarray(np.atleast_1d(phi), dtype=np.float64)
    cdef Py_ssize_t R = P.shape[0], C = P.shape[1], n = B.shape[1]
    Pc_arr = np.zeros((R, n_classes))
    a_arr = np.zeros((R, n_classes, n))
    cdef double[:, ::1] Pc = Pc_arr
    cdef double[:, :, ::1] a = a_arr
    cdef Py_ssize_t r, c, k, q
    cdef double w
    for r in range(R):
        for c in range(C):
            w = P[r, c]
            q = cls[c]
            Pc[r, q] += w
            for k in range(n):
                if B[c, k]:
                    a[r, q, k] += w
        for q in range(n_classes):
            if Pc[r, q] > 0:
                for k in range(n):
                    a[r, q, k] = a[r, q, k] / Pc[r, q] - ph[r]
            else:
                for k in range(n):
                    a[r, q, k] = -ph[r]
    return Pc_arr, a_arr


def subset_sums(values, swaps):
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef long long[:, ::1] sw = np.ascontiguousarray(swaps, dtype=np.int64)
    cdef Py_ssize_t Bn = sw.shape[0], m = sw.shape[1], N = v.shape[0]
    out_arr = np.zeros(Bn)
    cdef double[::1] out = out_arr
    perm_arr = np.empty(N, dtype=np.int64)
    cdef long long[::1] perm = perm_arr
    cdef Py_ssize_t b, i, j
    cdef long long t
    cdef double acc
    for b in range(Bn):
        for i in range(N):
            perm[i] = i
        acc = 0.0
        for i in range(m):
            j = sw[b, i]
            t = perm[j]
            perm[j] = perm[i]
            perm[i] = t
            acc += v[t]
        out[b] = acc
    return out_arr
