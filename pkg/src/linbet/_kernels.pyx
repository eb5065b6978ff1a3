# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``linbet._kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, INFINITY

cnp.import_array()


def truncated_projection(U, y, double threshold, bint two_sided=True):
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef const double[::1] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t d = u.shape[0], t = u.shape[1], i, j
    if yy.shape[0] != t:
        raise ValueError("y length does not match the columns of U")
    z = np.zeros(d, dtype=np.float64)
    cdef double[::1] zz = z
    cdef double w, acc
    cdef Py_ssize_t clipped = 0
    with nogil:
        for i in range(d):
            acc = 0.0
            for j in range(t):
                w = u[i, j] * yy[j]
                if two_sided:
                    if fabs(w) <= threshold:
                        acc += w
                    else:
                        clipped += 1
                else:
                    if w <= threshold:
                        acc += w
                    else:
                        clipped += 1
            zz[i] = acc
    return z, int(clipped)


cdef void _select(double* a, Py_ssize_t n, Py_ssize_t kth) noexcept nogil:
    # Hoare quickselect; leaves the kth smallest at a[kth]
    cdef Py_ssize_t lo = 0, hi = n - 1, i, j
    cdef double pivot, tmp
    while lo < hi:
        pivot = a[(lo + hi) // 2]
        i = lo
        j = hi
        while i <= j:
            while a[i] < pivot:
                i += 1
            while a[j] > pivot:
                j -= 1
            if i <= j:
                tmp = a[i]
                a[i] = a[j]
                a[j] = tmp
                i += 1
                j -= 1
        if kth <= j:
            hi = j
        elif kth >= i:
            lo = i
        else:
            return


def lower_median_distances(Z):
    cdef const double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef Py_ssize_t k = z.shape[0], d = z.shape[1], a, b, c
    if k == 1:
        return np.zeros(1)
    D2 = np.empty((k, k), dtype=np.float64)
    cdef double[:, ::1] dd = D2
    out = np.empty(k, dtype=np.float64)
    cdef double[::1] r = out
    cdef double s, diff
    cdef Py_ssize_t pos = (k - 1 + 1) // 2 - 1
    with nogil:
        for a in range(k):
            dd[a, a] = INFINITY
            for b in range(a + 1, k):
                s = 0.0
                for c in range(d):
                    diff = z[a, c] - z[b, c]
                    s += diff * diff
                dd[a, b] = s
                dd[b, a] = s
        for a in range(k):
            _select(&dd[a, 0], k, pos)
            r[a] = sqrt(dd[a, pos])
    return out
