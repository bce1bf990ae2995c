"""Hot-loop kernels, compiled when available.

The Cython extension ``dnls._ckernels`` is used if it was built; otherwise the
NumPy versions in ``dnls._pykernels`` are used.  Set ``DNLS_PURE_PYTHON=1`` to
force the fallback.  ``BACKEND`` names the active implementation.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

_impl = _pykernels
BACKEND = "python"
if os.environ.get("DNLS_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        pass


def _resolve(impl):
    if impl is None:
        return _impl
    if isinstance(impl, str):
        try:
            return available_backends()[impl]
        except KeyError:
            raise ValueError(f"unknown kernel backend {impl!r}") from None
    return impl


def cubic_accumulate(fields, terms, coeffs, out, impl=None):
    """Accumulate cubic products of ``fields`` rows into ``out``.

    ``terms`` is an ``(T, 4)`` integer table of ``(component, f1, f2, f3)`` row
    indices, ``coeffs`` the matching complex coefficients.
    """
    impl = _resolve(impl)
    if len(coeffs) == 0:
        return out
    if impl is _pykernels:
        return impl.cubic_accumulate(fields, terms, coeffs, out)
    return impl.cubic_accumulate(
        np.ascontiguousarray(fields, dtype=np.complex128),
        np.ascontiguousarray(terms, dtype=np.int64),
        np.ascontiguousarray(coeffs, dtype=np.complex128),
        out,
    )


def simpson_sampled(x0, dx, absvals, xi0, tau, a, b, tol, max_depth=50, impl=None):
    impl = _resolve(impl)
    vals = np.ascontiguousarray(absvals, dtype=np.float64)
    return impl.simpson_sampled(float(x0), float(dx), vals, float(xi0), float(tau),
                                float(a), float(b), float(tol), int(max_depth))


def available_backends():
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
