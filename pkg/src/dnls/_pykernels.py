"""Pure-Python/NumPy versions of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation, so the two backends
agree to rounding.
"""
from __future__ import annotations

import math

import numpy as np


def cubic_accumulate(fields, terms, coeffs, out):
    """Add ``c * f1 * f2 * f3`` for every term row ``(j, f1, f2, f3)`` into ``out[j]``."""
    for (j, f1, f2, f3), c in zip(terms, coeffs):
        out[j] += c * fields[f1] * fields[f2] * fields[f3]
    return out


def _interp(x0, dx, vals, xi):
    s = (xi - x0) / dx
    i = math.floor(s)
    if i < 0 or i >= len(vals) - 1:
        if i == len(vals) - 1 and s == i:
            return float(vals[i])
        return 0.0
    w = s - i
    return (1.0 - w) * vals[i] + w * vals[i + 1]


def simpson_sampled(x0, dx, absvals, xi0, tau, a, b, tol, max_depth=50):
    """Adaptive Simpson for ``int_a^b th^2 / (1 + (xi-xi0)^2 th^2 tau)``.

    ``th`` is the piecewise-linear interpolant of ``absvals`` on the uniform
    grid ``x0 + k*dx`` and is zero outside it.
    """
    vals = [float(v) for v in np.asarray(absvals, dtype=float)]

    def f(xi):
        th = _interp(x0, dx, vals, xi)
        th2 = th * th
        d = xi - xi0
        return th2 / (1.0 + d * d * th2 * tau)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm = f(lm)
        frm = f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (rec(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))

    if b <= a:
        return 0.0
    fa, fb = f(a), f(b)
    fm = f(0.5 * (a + b))
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return rec(a, b, fa, fm, fb, whole, tol, max_depth)
