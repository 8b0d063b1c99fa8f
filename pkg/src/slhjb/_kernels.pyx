# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops of the backward recursion on 1-D uniform grids.

For every grid node m the kernels evaluate

    out[m] = sum_i lam[i] * I[values](base[m] + c1[m] * xi[i] + c2[m] * xi[i]**2)

where I is linear or monotone cubic interpolation, and set flags[m] when any
destination leaves [lo, hi]. Out-of-range destinations are clamped (mode 0 and
2) or extrapolated along the boundary cell (mode 1); the caller recomputes
flagged nodes when the grid uses an analytic asymptote.
"""

from cython.parallel cimport prange

cdef enum:
    LINEAR_EXTRAP = 1


cdef inline double _linear_at(const double[::1] v, double lo, double dx, Py_ssize_t J,
                              double y, int mode) noexcept nogil:
    cdef double u = (y - lo) / dx
    cdef Py_ssize_t k
    cdef double t
    if u <= 0.0:
        if mode == LINEAR_EXTRAP:
            return v[0] + u * (v[1] - v[0])
        return v[0]
    if u >= J:
        if mode == LINEAR_EXTRAP:
            return v[J] + (u - J) * (v[J] - v[J - 1])
        return v[J]
    k = <Py_ssize_t> u
    if k >= J:
        k = J - 1
    t = u - k
    return (1.0 - t) * v[k] + t * v[k + 1]


cdef inline double _pchip_at(const double[::1] v, const double[::1] s, double lo, double dx,
                             Py_ssize_t J, double y, int mode) noexcept nogil:
    cdef double u = (y - lo) / dx
    cdef Py_ssize_t k
    cdef double t, t2, t3
    if u <= 0.0:
        if mode == LINEAR_EXTRAP:
            return v[0] + u * (v[1] - v[0])
        return v[0]
    if u >= J:
        if mode == LINEAR_EXTRAP:
            return v[J] + (u - J) * (v[J] - v[J - 1])
        return v[J]
    k = <Py_ssize_t> u
    if k >= J:
        k = J - 1
    t = u - k
    t2 = t * t
    t3 = t2 * t
    return ((2.0 * t3 - 3.0 * t2 + 1.0) * v[k]
            + (t3 - 2.0 * t2 + t) * dx * s[k]
            + (-2.0 * t3 + 3.0 * t2) * v[k + 1]
            + (t3 - t2) * dx * s[k + 1])


def expect_linear_1d(const double[::1] values, double lo, double hi, double dx,
                     const double[::1] base, const double[::1] c1, const double[::1] c2,
                     const double[::1] xi, const double[::1] lam, int mode,
                     double[::1] out, unsigned char[::1] flags, int num_threads=1):
    cdef Py_ssize_t n = base.shape[0]
    cdef Py_ssize_t Q = xi.shape[0]
    cdef Py_ssize_t J = values.shape[0] - 1
    cdef Py_ssize_t m, i
    cdef double acc, y
    cdef unsigned char flag
    for m in prange(n, nogil=True, schedule="static", num_threads=num_threads):
        acc = 0.0
        flag = 0
        for i in range(Q):
            y = base[m] + c1[m] * xi[i] + c2[m] * xi[i] * xi[i]
            if y < lo or y > hi:
                flag = 1
            acc = acc + lam[i] * _linear_at(values, lo, dx, J, y, mode)
        out[m] = acc
        flags[m] = flag


def expect_pchip_1d(const double[::1] values, const double[::1] slopes, double lo, double hi,
                    double dx, const double[::1] base, const double[::1] c1, const double[::1] c2,
                    const double[::1] xi, const double[::1] lam, int mode,
                    double[::1] out, unsigned char[::1] flags, int num_threads=1):
    cdef Py_ssize_t n = base.shape[0]
    cdef Py_ssize_t Q = xi.shape[0]
    cdef Py_ssize_t J = values.shape[0] - 1
    cdef Py_ssize_t m, i
    cdef double acc, y
    cdef unsigned char flag
    for m in prange(n, nogil=True, schedule="static", num_threads=num_threads):
        acc = 0.0
        flag = 0
        for i in range(Q):
            y = base[m] + c1[m] * xi[i] + c2[m] * xi[i] * xi[i]
            if y < lo or y > hi:
                flag = 1
            acc = acc + lam[i] * _pchip_at(values, slopes, lo, dx, J, y, mode)
        out[m] = acc
        flags[m] = flag
