# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pair-sum kernels.

Both routines accumulate with Kahan compensation, per offset (or row) and
again across offsets, in a fixed order so results are reproducible.
"""

from libc.math cimport fabs, pow, sqrt


cdef inline double _phi(double fa, double fb, double ga, double gb,
                        double p, int mode) noexcept nogil:
    cdef double d = fa - fb
    if mode == 1:
        return d * (ga - gb)
    d = fabs(d)
    if p == 1.0:
        return d
    if p == 2.0:
        return d * d
    if p == 3.0:
        return d * d * d
    if p == 1.5:
        return d * sqrt(d)
    if d == 0.0:
        return 0.0
    return pow(d, p)


cdef inline void _kahan(double* s, double* c, double x) noexcept nogil:
    cdef double y = x - c[0]
    cdef double tt = s[0] + y
    c[0] = (tt - s[0]) - y
    s[0] = tt


cdef inline void _run(const double* fa, const double* fb, const double* ga, const double* gb,
                      Py_ssize_t cnt, double p, int mode, double* row, double* row_c) noexcept nogil:
    # four interleaved compensated lanes break the serial add chain
    cdef double s[4]
    cdef double c[4]
    cdef Py_ssize_t i, q, full = cnt - cnt % 4
    for q in range(4):
        s[q] = 0.0
        c[q] = 0.0
    for i in range(0, full, 4):
        for q in range(4):
            _kahan(&s[q], &c[q], _phi(fa[i + q], fb[i + q], ga[i + q], gb[i + q], p, mode))
    for i in range(full, cnt):
        _kahan(&s[0], &c[0], _phi(fa[i], fb[i], ga[i], gb[i], p, mode))
    for q in range(4):
        _kahan(row, row_c, s[q])
        _kahan(row, row_c, -c[q])


def offset_pair_sum(const double[::1] f, const double[::1] g, const double[::1] k,
                    bint periodic, double p, int mode):
    """Sum over ordered pairs ``(i, i+m)`` of ``k[m] * phi`` for offsets m >= 1.

    ``phi`` is ``|f_i - f_j|**p`` (mode 0) or ``(f_i - f_j)(g_i - g_j)``
    (mode 1).  On periodic grids ``2 * (len(k) - 1)`` must not exceed N.
    """
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t mmax = k.shape[0] - 1
    cdef Py_ssize_t m, stop
    cdef double tot = 0.0, tot_c = 0.0, row, row_c, y, tt, term, coef
    if g.shape[0] != n:
        raise ValueError("f and g must have equal length")
    if periodic and 2 * mmax > n:
        raise ValueError("periodic offsets must not exceed N/2")
    if not periodic and mmax > n - 1:
        mmax = n - 1
    with nogil:
        for m in range(1, mmax + 1):
            if k[m] == 0.0:
                continue
            row = 0.0
            row_c = 0.0
            # split the wrap so the inner loops carry no index branch
            stop = n - m
            _run(&f[0], &f[m], &g[0], &g[m], stop, p, mode, &row, &row_c)
            if periodic:
                _run(&f[stop], &f[0], &g[stop], &g[0], m, p, mode, &row, &row_c)
            coef = 1.0 if (periodic and 2 * m == n) else 2.0
            term = coef * k[m] * row
            y = term - tot_c
            tt = tot + y
            tot_c = (tt - tot) - y
            tot = tt
    return tot


def dense_pair_sum(const double[:, ::1] K, Py_ssize_t row0, const double[::1] f,
                   const double[::1] g, const double[::1] w, double p, int mode):
    """Sum of ``K[r, j] * phi(row0 + r, j) * w[row0 + r] * w[j]`` over a row block."""
    cdef Py_ssize_t nr = K.shape[0], nc = K.shape[1]
    cdef Py_ssize_t r, j, i
    cdef double tot = 0.0, tot_c = 0.0, row, row_c, y, tt, term
    if nc != f.shape[0] or nc != w.shape[0] or nc != g.shape[0]:
        raise ValueError("kernel block width must match the field length")
    if row0 < 0 or row0 + nr > nc:
        raise ValueError("row block out of range")
    with nogil:
        for r in range(nr):
            i = row0 + r
            row = 0.0
            row_c = 0.0
            for j in range(nc):
                if K[r, j] == 0.0:
                    continue
                term = K[r, j] * _phi(f[i], f[j], g[i], g[j], p, mode) * w[j]
                y = term - row_c
                tt = row + y
                row_c = (tt - row) - y
                row = tt
            term = row * w[i]
            y = term - tot_c
            tt = tot + y
            tot_c = (tt - tot) - y
            tot = tt
    return tot
