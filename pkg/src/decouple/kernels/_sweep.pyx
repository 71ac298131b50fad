# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled forward RK4 sweep for the built-in drift families.

kind 0: linear drift  A(y) = M y
kind 1: radial saturating drift  A(y) = a y / (1 + |y|)
"""
import numpy as np
from libc.math cimport sqrt, isfinite


cdef inline void _drift(int kind, const double[:, ::1] mat, double scale,
                        const double* y, double* out, int d) noexcept nogil:
    cdef int i, k
    cdef double acc, r
    if kind == 0:
        for i in range(d):
            acc = 0.0
            for k in range(d):
                acc += mat[i, k] * y[k]
            out[i] = acc
    else:
        r = 0.0
        for i in range(d):
            r += y[i] * y[i]
        r = scale / (1.0 + sqrt(r))
        for i in range(d):
            out[i] = r * y[i]


def rk4_forward(const double[:, ::1] y0, const double[:, :, ::1] gz,
                const double[::1] dt, int kind, const double[:, ::1] mat,
                double scale):
    """Integrate dy/ds = A(y) - gz(s) with gz linear between nodes.

    Parameters
    ----------
    y0 : (B, d) initial states.
    gz : (K+1, B, d) values of G z at the nodes.
    dt : (K,) step lengths.

    Returns
    -------
    ndarray (K+1, B, d), or None if the state became nonfinite.
    """
    cdef Py_ssize_t K = dt.shape[0]
    cdef int B = y0.shape[0]
    cdef int d = y0.shape[1]
    out = np.empty((K + 1, B, d))
    cdef double[:, :, ::1] y = out
    work = np.empty((6, d))
    cdef double[:, ::1] w = work
    cdef double* k1 = &w[0, 0]
    cdef double* k2 = &w[1, 0]
    cdef double* k3 = &w[2, 0]
    cdef double* k4 = &w[3, 0]
    cdef double* tmp = &w[4, 0]
    cdef double* gm = &w[5, 0]
    cdef Py_ssize_t j
    cdef int b, i
    cdef double h, yi
    cdef bint ok = True
    with nogil:
        for b in range(B):
            for i in range(d):
                y[0, b, i] = y0[b, i]
        for j in range(K):
            h = dt[j]
            for b in range(B):
                for i in range(d):
                    gm[i] = 0.5 * (gz[j, b, i] + gz[j + 1, b, i])
                _drift(kind, mat, scale, &y[j, b, 0], k1, d)
                for i in range(d):
                    k1[i] -= gz[j, b, i]
                    tmp[i] = y[j, b, i] + 0.5 * h * k1[i]
                _drift(kind, mat, scale, tmp, k2, d)
                for i in range(d):
                    k2[i] -= gm[i]
                    tmp[i] = y[j, b, i] + 0.5 * h * k2[i]
                _drift(kind, mat, scale, tmp, k3, d)
                for i in range(d):
                    k3[i] -= gm[i]
                    tmp[i] = y[j, b, i] + h * k3[i]
                _drift(kind, mat, scale, tmp, k4, d)
                for i in range(d):
                    k4[i] -= gz[j + 1, b, i]
                    yi = y[j, b, i] + h * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0
                    if not isfinite(yi):
                        ok = False
                    y[j + 1, b, i] = yi
            if not ok:
                break
    if not ok:
        return None
    return out
