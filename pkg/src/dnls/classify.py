"""Dissipativity classification and structural checks on nonlinearities."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .nonlin import Coef, CubicNonlinearity, NuPolynomial, p_eval

NOT_A, A0, A_PLUS, WEAK = "NotA", "A0", "APlus", "Weak"


def _num(x):
    if x is None:
        return None
    return float(x)


@dataclass(frozen=True)
class DissipativityClass:
    """Outcome of :func:`classify_single`.

    ``sup_im_nu`` is set for ``APlus``; ``c0`` and ``xi0`` for ``Weak``
    (``Im nu(xi) = -c0 (xi - xi0)^2``).  Exact inputs give ``Fraction`` values.
    """

    tag: str
    sup_im_nu: Optional[object] = None
    c0: Optional[object] = None
    xi0: Optional[object] = None
    tolerance_based: bool = False

    def to_json(self) -> dict:
        return {
            "class": self.tag,
            "c0": _num(self.c0),
            "xi0": _num(self.xi0),
            "supImNu": _num(self.sup_im_nu),
            "tolerance_based": self.tolerance_based,
        }


def classify_single(nu: NuPolynomial, tol: float = 1e-12) -> DissipativityClass:
    """Classify ``nu`` through ``q(xi) = Im nu(xi)`` (a real cubic).

    ``q == 0`` gives A0; ``q`` taking positive values gives NotA;
    ``q = -c0 (xi - xi0)^2`` gives Weak; ``sup q < 0`` gives APlus.  Exact
    coefficients are decided exactly.  Float coefficients are normalised by
    their largest magnitude and compared against ``tol``.
    """
    b = list(nu.imag_coeffs())
    approx = not nu.exact
    if approx:
        b = [float(v) for v in b]
        scale = max(abs(v) for v in b)
        if scale == 0.0:
            return DissipativityClass(A0, tolerance_based=True)
        b = [0.0 if abs(v) <= tol * scale else v for v in b]

    def is_zero(v):
        return v == 0

    b0, b1, b2, b3 = b
    if all(is_zero(v) for v in b):
        return DissipativityClass(A0, tolerance_based=approx)
    if not is_zero(b3):
        return DissipativityClass(NOT_A, tolerance_based=approx)
    if is_zero(b2):
        if not is_zero(b1) or b0 > 0:
            return DissipativityClass(NOT_A, tolerance_based=approx)
        return DissipativityClass(A_PLUS, sup_im_nu=b0, tolerance_based=approx)
    if b2 > 0:
        return DissipativityClass(NOT_A, tolerance_based=approx)
    vertex = -b1 / (2 * b2)
    top = b0 - b1 * b1 / (4 * b2)
    if approx and abs(top) <= tol * scale:
        top = 0.0
    if top > 0:
        return DissipativityClass(NOT_A, tolerance_based=approx)
    if is_zero(top):
        return DissipativityClass(WEAK, c0=-b2, xi0=vertex, tolerance_based=approx)
    return DissipativityClass(A_PLUS, sup_im_nu=top, tolerance_based=approx)


def check_mass_resonance(N: CubicNonlinearity) -> list:
    """Terms violating ``m_j = mt_k1 + mt_k2 + mt_k3`` (empty means it holds)."""
    bad = []
    for (j, tri), c in N.terms:
        if N.masses[j - 1] != sum(N.mass_tilde(k) for k, _ in tri):
            bad.append(((j, tri), c))
    return bad


# -- Hermitian quartic-form conditions ------------------------------------

LEVELS = ("b0", "b1", "b2", "b3")


class HermitianMatrixError(ValueError):
    """The weight matrix is not Hermitian positive definite."""


@dataclass
class HermitianVerdict:
    level: str
    holds_on_samples: bool
    min_margin: float
    witness: Optional[tuple] = None
    constant: Optional[float] = None
    exact: bool = False
    seed: Optional[int] = None
    n_xi: int = 0
    n_y: int = 0

    def to_json(self) -> dict:
        w = None
        if self.witness is not None:
            xi, Y = self.witness
            w = {"xi": float(xi), "Y": [[float(v.real), float(v.imag)] for v in np.atleast_1d(Y)]}
        return {
            "level": self.level,
            "holds_on_samples": self.holds_on_samples,
            "min_margin": self.min_margin,
            "witness": w,
            "constant": self.constant,
            "exact": self.exact,
            "seed": self.seed,
            "n_xi": self.n_xi,
            "n_y": self.n_y,
        }


def _validate_h(H, n):
    H = np.atleast_2d(np.asarray(H, dtype=np.complex128))
    if H.shape != (n, n):
        raise HermitianMatrixError(f"H must be {n}x{n}, got {H.shape}")
    if not np.allclose(H, H.conj().T, rtol=0, atol=1e-12 * max(1.0, np.abs(H).max())):
        raise HermitianMatrixError("H is not Hermitian")
    if np.linalg.eigvalsh(H).min() <= 0:
        raise HermitianMatrixError("H is not positive definite")
    return H


def default_xi_samples(count: int = 64) -> np.ndarray:
    """Chebyshev points on [-20, 20] plus the far points +-1e3."""
    k = np.arange(count - 2)
    cheb = 20.0 * np.cos(np.pi * (k + 0.5) / (count - 2))
    return np.concatenate([np.sort(cheb), [-1e3, 1e3]])


def default_y_samples(n: int, count: int = 4096, seed: int = 0) -> np.ndarray:
    """Unit-sphere samples in C^n, shape ``(n, count)``.

    Coordinate vectors and equal-modulus phase vectors come first, then
    normalised complex Gaussians.
    """
    rng = np.random.default_rng(seed)
    cols = [np.eye(n, dtype=np.complex128)[:, j] for j in range(n)]
    cols.append(np.ones(n, dtype=np.complex128) / math.sqrt(n))
    for _ in range(min(16, max(0, count - len(cols)))):
        cols.append(np.exp(1j * rng.uniform(0, 2 * np.pi, n)) / math.sqrt(n))
    structured = np.stack(cols[:count], axis=1)
    rest = count - structured.shape[1]
    if rest > 0:
        z = rng.standard_normal((n, rest)) + 1j * rng.standard_normal((n, rest))
        z /= np.linalg.norm(z, axis=0)
        structured = np.concatenate([structured, z], axis=1)
    return structured


def _p_vanishes_exactly(N: CubicNonlinearity):
    """Group ``p`` by (component, Y-monomial, power of xi); return the largest leftover."""
    groups = defaultdict(Coef)
    for (j, tri), c in N.terms:
        coef = c
        power = 0
        for k, l in tri:
            if l:
                coef = (coef * N.mass_tilde(k)).times_i(1)
                power += 1
        key = (j, tuple(sorted(k for k, _ in tri)), power)
        groups[key] = groups[key] + coef
    leftover = [abs(complex(c)) for c in groups.values() if not c.is_zero()]
    if not N.exact:
        scale = max([abs(complex(c)) for _, c in N.terms] or [1.0])
        leftover = [v for v in leftover if v > 1e-12 * scale]
    return max(leftover, default=0.0)


def check_hermitian_condition(N: CubicNonlinearity, H=None, level: str = "b0",
                              xi_samples=None, y_samples=None, *, seed: int = 0,
                              n_xi: int = 64, n_y: int = 4096,
                              tol: float = 1e-12) -> HermitianVerdict:
    """Sample ``g(xi, Y) = Im <p(xi; Y), H Y>`` against condition ``level``.

    b0: ``g <= 0``.  b1: ``g <= -C_* |Y|^4``, reporting ``C_* = -max g`` on the
    unit sphere.  b2: same with the extra weight ``<xi>^2``.  b3: ``p == 0``,
    decided coefficient-wise.  This is a sampling check, not a certificate.
    """
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level!r}")
    H = _validate_h(np.eye(N.n) if H is None else H, N.n)
    xi = default_xi_samples(n_xi) if xi_samples is None else np.asarray(xi_samples, dtype=float)
    Y = default_y_samples(N.n, n_y, seed) if y_samples is None else np.asarray(y_samples, dtype=np.complex128)
    if Y.ndim == 1:
        Y = Y[:, None]
    if xi.size == 0 or Y.shape[-1] == 0:
        raise ValueError("sample sets must be nonempty")
    Y = Y / np.where(np.linalg.norm(Y, axis=0) > 0, np.linalg.norm(Y, axis=0), 1.0)

    p = p_eval(N, xi[:, None], Y[:, None, :])          # (n, n_xi, n_y)
    HY = np.einsum("ij,jk->ik", H, Y)[:, None, :]
    g = np.imag(np.sum(p * HY.conj(), axis=0))          # (n_xi, n_y)
    meta = dict(seed=seed, n_xi=int(xi.size), n_y=int(Y.shape[1]))

    if level == "b3":
        left = _p_vanishes_exactly(N)
        holds = left == 0.0
        witness = None
        if not holds:
            pa = np.linalg.norm(p, axis=0)
            a, b = np.unravel_index(np.argmax(pa), pa.shape)
            witness = (float(xi[a]), Y[:, b].copy())
        return HermitianVerdict("b3", holds, -float(left), witness, exact=True, **meta)

    weight = 1.0 + xi ** 2 if level == "b2" else np.ones_like(xi)
    gw = g / weight[:, None]
    thresh = tol * max(float(np.abs(gw).max()), np.finfo(float).tiny)
    a, b = np.unravel_index(np.argmax(gw), gw.shape)
    top = float(gw[a, b])
    margin = -float(g.max()) + 0.0
    constant = None
    if level == "b0":
        holds = top <= thresh
    else:
        constant = -top + 0.0
        holds = constant > thresh
    witness = None if holds else (float(xi[a]), Y[:, b].copy())
    return HermitianVerdict(level, holds, margin, witness, constant, **meta)


def search_diagonal_h(N: CubicNonlinearity, level: str = "b0", grid=None, **kwargs):
    """Heuristic search over diagonal ``H`` on a log grid.

    The first entry is pinned to 1 (the conditions are homogeneous in ``H``).
    Returns ``(H, verdict)`` for the best candidate: holding verdicts first,
    then the largest margin per unit trace.
    """
    grid = np.logspace(-2, 2, 9) if grid is None else np.asarray(grid, dtype=float)
    if N.n > 3:
        raise ValueError("diagonal search is limited to n <= 3")
    best = None
    for rest in np.array(np.meshgrid(*([grid] * (N.n - 1)), indexing="ij")).reshape(N.n - 1, -1).T \
            if N.n > 1 else [()]:
        H = np.diag(np.concatenate([[1.0], np.asarray(rest, dtype=float)]))
        v = check_hermitian_condition(N, H, level, **kwargs)
        score = (v.holds_on_samples, v.min_margin / np.trace(H))
        if best is None or score > best[0]:
            best = (score, H, v)
    return best[1], best[2]


# -- lifespan --------------------------------------------------------------

@dataclass(frozen=True)
class LifespanBound:
    """Lower bound for ``liminf eps^2 log T_eps``; ``inf`` when nothing grows."""

    bound: float
    argmax_xi: Optional[float] = None
    sup_value: float = 0.0

    def to_json(self) -> dict:
        return {
            "bound": None if math.isinf(self.bound) else self.bound,
            "infinite": math.isinf(self.bound),
            "argmax_xi": self.argmax_xi,
            "sup": self.sup_value,
        }


def lifespan_bound(nu: NuPolynomial, xi, psi_hat) -> LifespanBound:
    """``1 / (2 max_xi |psi_hat|^2 Im nu)`` over the sample grid, ``1/0 = inf``.

    The grid must cover the essential support of ``psi_hat``; only grid
    suprema are reported.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.size == 0:
        raise ValueError("empty xi grid")
    vals = np.abs(np.asarray(psi_hat)) ** 2 * np.imag(nu(xi))
    k = int(np.argmax(vals))
    top = float(vals[k]) + 0.0
    if top <= 0.0:
        return LifespanBound(math.inf, None, top)
    return LifespanBound(1.0 / (2.0 * top), float(xi[k]), top)
