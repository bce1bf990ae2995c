"""Limit ODEs on the slow time ``tau = log t`` and the integral ``S(tau)``.

Single equation: ``i dA/dtau = nu(xi) |A|^2 A`` independently for every
``xi``, so ``d|A|^2/dtau = 2 Im nu |A|^4``.  Two-component system:
``da1/dtau = -|a2|^2 a1``, ``da2/dtau = -|a1|^2 a2``, which conserves
``|a1|^2 - |a2|^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .nonlin import NuPolynomial


class ProfileBlowUp(ValueError):
    """The closed form hits its pole (``Im nu > 0`` and large ``tau``)."""


@dataclass
class ProfileState:
    """Amplitudes ``A(tau, xi)``: shape ``(M,)`` single, ``(2, M)`` for a pair."""

    tau: float
    xi: np.ndarray
    A: np.ndarray
    diverged: bool = False


def _rk4(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def profile_step_single(state: ProfileState, dtau: float, nu: NuPolynomial) -> ProfileState:
    """Advance ``i dA/dtau = nu |A|^2 A`` by one RK4 step.

    Non-dissipative frequencies may blow up; the state is then flagged
    ``diverged`` instead of raising.
    """
    if not dtau > 0:
        raise ValueError("dtau must be positive")
    nuv = nu(state.xi)
    with np.errstate(over="ignore", invalid="ignore"):
        A = _rk4(lambda a: -1j * nuv * np.abs(a) ** 2 * a, state.A, dtau)
    bad = state.diverged or not np.all(np.isfinite(A))
    return replace(state, tau=state.tau + dtau, A=A, diverged=bad)


def profile_step_pair(state: ProfileState, dtau: float) -> ProfileState:
    """One RK4 step of the two-component limit system."""
    if not dtau > 0:
        raise ValueError("dtau must be positive")

    def f(a):
        p = np.abs(a) ** 2
        return -np.stack([p[1] * a[0], p[0] * a[1]])

    A = _rk4(f, state.A, dtau)
    return replace(state, tau=state.tau + dtau, A=A)


def integrate_profile(state: ProfileState, tau_end: float, dtau: float,
                      nu: Optional[NuPolynomial] = None, record: Sequence[float] = ()):
    """Step to ``tau_end``; returns the final state and snapshots at ``record``.

    Uses the single equation when ``nu`` is given, the pair system otherwise.
    """
    marks = sorted(set(float(r) for r in record) | {float(tau_end)})
    out = {}
    for mark in marks:
        while state.tau < mark - 1e-12:
            h = min(dtau, mark - state.tau)
            state = profile_step_single(state, h, nu) if nu is not None else profile_step_pair(state, h)
        state = replace(state, tau=mark)
        out[mark] = state.A.copy()
    return state, out


def closed_form_modulus_single(xi, A0, tau, nu: NuPolynomial) -> np.ndarray:
    """``|A(tau)|^2 = |A0|^2 / (1 - 2 Im nu(xi) |A0|^2 tau)``.

    Under weak dissipativity this is ``|A0|^2 / (1 + 2 c0 (xi-xi0)^2 |A0|^2 tau)``.
    """
    xi = np.asarray(xi, dtype=float)
    a2 = np.abs(np.asarray(A0)) ** 2
    denom = 1.0 - 2.0 * np.imag(nu(xi)) * a2 * tau
    if np.any(denom <= 0):
        raise ProfileBlowUp(f"closed form reaches its pole before tau = {tau}")
    return a2 / denom


def two_component_profile(P0, Q0, tau):
    """Closed form of the pair system in the squared moduli ``P, Q``.

    ``d = P0 - Q0`` is conserved; ``P = d P0 / (P0 - Q0 exp(-2 d tau))`` and
    ``P = Q = P0 / (1 + 2 P0 tau)`` when ``d = 0``.  ``Q`` uses the mirrored
    formula rather than ``P - d``, which keeps it accurate once it is tiny.
    """
    P0 = np.asarray(P0, dtype=float)
    Q0 = np.asarray(Q0, dtype=float)
    if np.any(P0 < 0) or np.any(Q0 < 0):
        raise ValueError("P0 and Q0 are squared moduli and must be non-negative")
    tau = np.asarray(tau, dtype=float)
    d = P0 - Q0

    def ratio(x):
        # expm1(-2 x tau) / x, continuous through x = 0
        safe = np.where(x != 0, x, 1.0)
        with np.errstate(over="ignore"):
            return np.where(x != 0, np.expm1(-2.0 * x * tau) / safe, -2.0 * tau)

    # each modulus from its own formula so neither is a cancelling difference
    with np.errstate(divide="ignore"):
        P = P0 / (1.0 - Q0 * ratio(d))
        Q = Q0 / (1.0 - P0 * ratio(-d))
    return P, Q


# -- the integral S(tau) ----------------------------------------------------

def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 50) -> float:
    """Plain recursive adaptive Simpson for scalar callables."""
    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (rec(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))

    if b <= a:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    return rec(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, max_depth)


def _panels(a, b, xi0, width, extra=()):
    pts = {a, b}
    if a < xi0 < b:
        pts.add(xi0)
    step = width
    while step < (b - a):
        for p in (xi0 - step, xi0 + step):
            if a < p < b:
                pts.add(p)
        step *= 2.0
    pts.update(p for p in extra if a < p < b)
    return sorted(pts)


def _support(xi, vals, cutoff):
    idx = np.nonzero(vals >= cutoff)[0]
    if idx.size == 0:
        return None
    lo = max(idx[0] - 1, 0)
    hi = min(idx[-1] + 1, len(xi) - 1)
    return float(xi[lo]), float(xi[hi])


def s_integral(theta, xi0: float, tau: float, xi=None, *, bounds=None, breakpoints=(),
               tol: float = 1e-10, cutoff: float = 1e-8, impl=None) -> float:
    """``S(tau) = int |theta|^2 / (1 + (xi - xi0)^2 |theta|^2 tau) dxi``.

    ``theta`` is either samples on the uniform grid ``xi`` (linearly
    interpolated, zero outside the grid, tails below ``cutoff`` dropped) or a
    scalar callable integrated over ``bounds``.  Panels are refined
    geometrically around ``xi0`` so the peak of width ``tau^-1/2`` is never
    stepped over.
    """
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    if callable(theta):
        if bounds is None:
            raise ValueError("bounds are required for a callable theta")
        a, b = map(float, bounds)
        probe = np.linspace(a, b, 4001)
        sup = max(abs(theta(v)) for v in probe)
        if sup == 0:
            return 0.0

        def f(v):
            th2 = abs(theta(v)) ** 2
            return th2 / (1.0 + (v - xi0) ** 2 * th2 * tau)

        pts = _panels(a, b, xi0, 1.0 / (sup * math.sqrt(tau)), breakpoints)
        return sum(adaptive_simpson(f, p, q, tol / (len(pts) - 1)) for p, q in zip(pts, pts[1:]))

    if xi is None:
        raise ValueError("sampled theta needs its xi grid")
    xi = np.asarray(xi, dtype=float)
    vals = np.abs(np.asarray(theta))
    if vals.shape != xi.shape:
        raise ValueError("theta and xi must have the same shape")
    dx = float(xi[1] - xi[0])
    if not np.allclose(np.diff(xi), dx, rtol=1e-9, atol=0):
        raise ValueError("sampled theta must live on a uniform grid")
    sup = float(vals.max()) if vals.size else 0.0
    span = _support(xi, vals, cutoff) if sup > 0 else None
    if span is None:
        return 0.0
    a, b = span
    pts = _panels(a, b, xi0, 1.0 / (sup * math.sqrt(tau)), breakpoints)
    ptol = tol / (len(pts) - 1)
    return sum(kernels.simpson_sampled(xi[0], dx, vals, xi0, tau, p, q, ptol, impl=impl)
               for p, q in zip(pts, pts[1:]))


@dataclass
class SBoundsReport:
    taus: np.ndarray
    S: np.ndarray
    scaled: np.ndarray        # S(tau) * sqrt(tau)
    upper: float              # 4 * sup |theta|
    c_star: float             # empirical lower constant, min of ``scaled``
    upper_holds: bool
    monotone: bool

    def to_json(self) -> dict:
        return {
            "tau": self.taus.tolist(), "S": self.S.tolist(),
            "S_sqrt_tau": self.scaled.tolist(), "upper_bound": self.upper,
            "c_star_empirical": self.c_star, "upper_holds": self.upper_holds,
            "monotone": self.monotone,
        }


def s_bounds_check(theta, xi0: float, taus, xi=None, **kwargs) -> SBoundsReport:
    """Check ``C_* <= S(tau) sqrt(tau) <= 4 sup|theta|`` over ``taus``."""
    taus = np.asarray(taus, dtype=float)
    S = np.array([s_integral(theta, xi0, t, xi, **kwargs) for t in taus])
    if callable(theta):
        a, b = kwargs["bounds"]
        sup = max(abs(theta(v)) for v in np.linspace(a, b, 4001))
    else:
        sup = float(np.abs(np.asarray(theta)).max())
    scaled = S * np.sqrt(taus)
    upper = 4.0 * sup
    order = np.argsort(taus)
    return SBoundsReport(
        taus=taus, S=S, scaled=scaled, upper=upper,
        c_star=float(scaled.min()) if scaled.size else math.nan,
        upper_holds=bool(np.all(scaled <= upper)),
        monotone=bool(np.all(np.diff(S[order]) <= 1e-12 * max(1.0, S.max()))),
    )
