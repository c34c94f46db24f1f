# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: folded-kernel table build and Toeplitz-block apply.

The table block is blk[i, ip, k] = kappa_s(r_i, r_ip, (k - (nt-1))*dtheta)
times the source weight w_ip for k = 0 .. 2*nt-2.  The exact diagonal entry
(i == ip, k == nt-1) is finalized by the caller, which substitutes the
equal-area self-cell integral for the singular n = 0 image; here that term
is simply skipped.  Parallelism is over output rows only, so every entry is
computed by exactly one thread in a fixed order and results are bitwise
reproducible for any thread count.
"""
from cython.parallel cimport prange
from libc.math cimport M_PI, cos, pow

import numpy as np


def table_block(double s, double c_s, int n_folds, double[::1] r,
                double dr, double dtheta, int n_theta, int nthreads):
    cdef Py_ssize_t nr = r.shape[0]
    cdef Py_ssize_t nk = 2 * n_theta - 1
    out = np.empty((nr, nr, nk))
    cdef double[:, :, ::1] blk = out
    cdef Py_ssize_t i, ip, k
    cdef int n
    cdef double acc, xi, d2, wsrc
    for i in prange(nr, nogil=True, schedule="static", num_threads=nthreads):
        for ip in range(nr):
            wsrc = r[ip] * dr * dtheta
            for k in range(nk):
                acc = 0.0
                for n in range(n_folds):
                    xi = dtheta * (k - (n_theta - 1)) - 2.0 * M_PI * n / n_folds
                    d2 = r[i] * r[i] + r[ip] * r[ip] - 2.0 * r[i] * r[ip] * cos(xi)
                    if d2 > 0.0:
                        acc = acc + pow(d2, s - 1.0)
                blk[i, ip, k] = c_s * acc * wsrc
    return out


def apply_block(double[:, :, ::1] blk, double[:, ::1] om, int nthreads):
    cdef Py_ssize_t nr = om.shape[0]
    cdef Py_ssize_t nt = om.shape[1]
    out_arr = np.empty((nr, nt))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, ip, j, jp
    cdef double acc
    for i in prange(nr, nogil=True, schedule="static", num_threads=nthreads):
        for j in range(nt):
            acc = 0.0
            for ip in range(nr):
                for jp in range(nt):
                    acc = acc + blk[i, ip, j - jp + nt - 1] * om[ip, jp]
            out[i, j] = acc
    return out_arr
