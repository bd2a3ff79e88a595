# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: ordered scatter-add for truncated-series convolution
and the quadratic coefficient sweeps behind the universal constants.

Accumulation order is part of the contract: ``seg_add`` adds products in the
order given by ``targets`` so results are bit-identical to a sequential
double-loop convolution.
"""


def seg_add(const Py_ssize_t[::1] targets,
            const double complex[:, ::1] products,
            double complex[:, ::1] out):
    """out[targets[p], :] += products[p, :], strictly in increasing p."""
    cdef Py_ssize_t p, m, t
    cdef Py_ssize_t P = products.shape[0]
    cdef Py_ssize_t M = products.shape[1]
    with nogil:
        for p in range(P):
            t = targets[p]
            for m in range(M):
                out[t, m] = out[t, m] + products[p, m]
    return None


def square_bracket(Py_ssize_t k):
    """(k^2+1) * sum_{p=0}^{k} 1 / ((p^2+1)((k-p)^2+1))."""
    cdef double s = 0.0
    cdef double kk = <double> k
    cdef double pp, qq
    cdef Py_ssize_t p
    for p in range(k + 1):
        pp = <double> p
        qq = kk - pp
        s += 1.0 / ((pp * pp + 1.0) * (qq * qq + 1.0))
    return (kk * kk + 1.0) * s


def square_bracket_sweep(Py_ssize_t k_max):
    """Max of square_bracket(k) over 0 <= k <= k_max, with its argmax."""
    cdef double best = 0.0, s, pp, qq, kk
    cdef Py_ssize_t k, p, arg = 0
    with nogil:
        for k in range(k_max + 1):
            kk = <double> k
            s = 0.0
            for p in range(k + 1):
                pp = <double> p
                qq = kk - pp
                s += 1.0 / ((pp * pp + 1.0) * (qq * qq + 1.0))
            s *= kk * kk + 1.0
            if s > best:
                best = s
                arg = k
    return best, arg


def cross_bracket(Py_ssize_t n, Py_ssize_t p_lo, Py_ssize_t p_hi):
    """(n^2+1) * sum_{p=p_lo}^{p_hi} 1 / ((p^2+1)((n-p)^2+1))."""
    cdef double s = 0.0
    cdef double nn = <double> n
    cdef double pp, qq
    cdef Py_ssize_t p
    with nogil:
        for p in range(p_lo, p_hi + 1):
            pp = <double> p
            qq = nn - pp
            s += 1.0 / ((pp * pp + 1.0) * (qq * qq + 1.0))
    return (nn * nn + 1.0) * s
