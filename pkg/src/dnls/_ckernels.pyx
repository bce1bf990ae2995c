# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""
from libc.math cimport floor, fabs


def cubic_accumulate(double complex[:, ::1] fields, long long[:, ::1] terms,
                     double complex[::1] coeffs, double complex[:, ::1] out):
    cdef Py_ssize_t t, i, m = fields.shape[1]
    cdef long long j, f1, f2, f3
    cdef double complex c
    with nogil:
        for t in range(terms.shape[0]):
            j = terms[t, 0]
            f1 = terms[t, 1]
            f2 = terms[t, 2]
            f3 = terms[t, 3]
            c = coeffs[t]
            for i in range(m):
                out[j, i] = out[j, i] + ((c * fields[f1, i]) * fields[f2, i]) * fields[f3, i]
    return out


cdef struct Integrand:
    double x0
    double dx
    const double *vals
    Py_ssize_t n
    double xi0
    double tau


cdef inline double _interp(Integrand *g, double xi) nogil:
    cdef double s = (xi - g.x0) / g.dx
    cdef double fl = floor(s)
    cdef Py_ssize_t i = <Py_ssize_t>fl
    cdef double w
    if fl < 0 or i >= g.n - 1:
        if i == g.n - 1 and s == fl:
            return g.vals[i]
        return 0.0
    w = s - fl
    return (1.0 - w) * g.vals[i] + w * g.vals[i + 1]


cdef inline double _f(Integrand *g, double xi) nogil:
    cdef double th = _interp(g, xi)
    cdef double th2 = th * th
    cdef double d = xi - g.xi0
    return th2 / (1.0 + d * d * th2 * g.tau)


cdef double _rec(Integrand *g, double a, double b, double fa, double fm, double fb,
                 double whole, double tol, int depth) nogil:
    cdef double m = 0.5 * (a + b)
    cdef double lm = 0.5 * (a + m)
    cdef double rm = 0.5 * (m + b)
    cdef double flm = _f(g, lm)
    cdef double frm = _f(g, rm)
    cdef double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    cdef double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    cdef double delta = left + right - whole
    if depth <= 0 or fabs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return (_rec(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _rec(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))


def simpson_sampled(double x0, double dx, const double[::1] absvals, double xi0,
                    double tau, double a, double b, double tol, int max_depth=50):
    cdef Integrand g
    cdef double fa, fm, fb, whole, res
    if b <= a:
        return 0.0
    g.x0 = x0
    g.dx = dx
    g.vals = &absvals[0]
    g.n = absvals.shape[0]
    g.xi0 = xi0
    g.tau = tau
    with nogil:
        fa = _f(&g, a)
        fb = _f(&g, b)
        fm = _f(&g, 0.5 * (a + b))
        whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
        res = _rec(&g, a, b, fa, fm, fb, whole, tol, max_depth)
    return res
