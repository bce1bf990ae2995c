"""Cubic derivative nonlinearities and their algebra.

A nonlinearity ``N = (N_j)`` for ``n`` components is a sum of monomials

    C * (d_x^l1 v_k1) (d_x^l2 v_k2) (d_x^l3 v_k3),

where ``v_k = u_k`` for ``k <= n`` and ``v_k = conj(u_{k-n})`` for ``k > n``.
A factor is the pair ``(k, l)``; a monomial is a sorted triple of factors.

Coefficients are kept exact (``fractions.Fraction`` real and imaginary parts)
whenever the input allows it, so that zero tests in the classifier are
decisions rather than tolerances.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational, Real
from pathlib import Path
from typing import Iterable, Mapping, Union

import numpy as np

Scalar = Union[Fraction, float]
Factor = tuple[int, int]
Triple = tuple[Factor, Factor, Factor]


class NonlinearityError(ValueError):
    """Malformed nonlinearity description or unsupported request."""


def _to_scalar(x) -> Scalar:
    if isinstance(x, bool):
        raise NonlinearityError(f"not a number: {x!r}")
    if isinstance(x, Fraction):
        return x
    if isinstance(x, Rational):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except ValueError as exc:
            raise NonlinearityError(f"cannot parse coefficient {x!r}") from exc
    if isinstance(x, Real):
        return float(x)
    raise NonlinearityError(f"not a real number: {x!r}")


def _same_kind(a: Scalar, b: Scalar) -> tuple[Scalar, Scalar]:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a, b
    return float(a), float(b)


@dataclass(frozen=True)
class Coef:
    """Complex number with exact rational parts when possible.

    Mixing an exact and a float part degrades both to float.
    """

    re: Scalar = Fraction(0)
    im: Scalar = Fraction(0)

    def __post_init__(self):
        re, im = _same_kind(_to_scalar(self.re), _to_scalar(self.im))
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def of(cls, value) -> "Coef":
        if isinstance(value, Coef):
            return value
        if isinstance(value, complex):
            return cls(value.real, value.imag)
        if isinstance(value, (list, tuple)):
            if len(value) != 2:
                raise NonlinearityError(f"coefficient must be [re, im], got {value!r}")
            return cls(value[0], value[1])
        return cls(value, 0 if not isinstance(value, float) else 0.0)

    @property
    def exact(self) -> bool:
        return isinstance(self.re, Fraction)

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def __add__(self, other):
        other = Coef.of(other)
        return Coef(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __neg__(self):
        return Coef(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-Coef.of(other))

    def __mul__(self, other):
        o = Coef.of(other)
        return Coef(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def times_i(self, power: int = 1) -> "Coef":
        """Multiply by ``i**power`` exactly."""
        c = self
        for _ in range(power % 4):
            c = Coef(-c.im, c.re)
        return c

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def to_json(self) -> list:
        return [_scalar_json(self.re), _scalar_json(self.im)]

    def __repr__(self):
        return f"Coef({self.re}, {self.im})"


def _scalar_json(x: Scalar):
    if isinstance(x, Fraction):
        return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return float(x)


@dataclass(frozen=True)
class CubicNonlinearity:
    """Canonical form of a cubic nonlinearity.

    ``terms`` is a sorted tuple of ``((j, triple), Coef)`` pairs with no zero
    coefficients; build instances with :func:`canonicalize`.
    """

    n: int
    masses: tuple
    terms: tuple

    @property
    def term_map(self) -> dict:
        return dict(self.terms)

    @property
    def exact(self) -> bool:
        return all(c.exact for _, c in self.terms) and all(
            isinstance(m, Fraction) for m in self.masses)

    @property
    def has_derivatives(self) -> bool:
        return any(l for (_, tri), _ in self.terms for _, l in tri)

    def mass_tilde(self, k: int) -> Scalar:
        """Signed mass of factor index ``k`` (negated for conjugates)."""
        return self.masses[k - 1] if k <= self.n else -self.masses[k - self.n - 1]

    def winding(self, triple: Triple) -> int:
        """Unconjugated minus conjugated factor count."""
        return sum(1 if k <= self.n else -1 for k, _ in triple)

    def term_table(self):
        """Integer/complex tables for :func:`dnls.kernels.cubic_accumulate`.

        Factor ``(k, l)`` maps to field row ``2*(k-1) + l``.
        """
        rows = [(j - 1, *(2 * (k - 1) + l for k, l in tri)) for (j, tri), _ in self.terms]
        terms = np.array(rows, dtype=np.int64).reshape(-1, 4)
        coeffs = np.array([complex(c) for _, c in self.terms], dtype=np.complex128)
        return terms, coeffs

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "masses": [_scalar_json(m) for m in self.masses],
            "terms": [
                {"component": j, "factors": [list(f) for f in tri], "coeff": c.to_json()}
                for (j, tri), c in self.terms
            ],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "CubicNonlinearity":
        try:
            n = int(obj["n"])
            masses = obj.get("masses", [1] * n)
            raw = [(t["component"], t["factors"], t["coeff"]) for t in obj["terms"]]
        except (KeyError, TypeError) as exc:
            raise NonlinearityError(f"malformed nonlinearity JSON: {exc}") from exc
        return canonicalize(raw, n=n, masses=masses)


def canonicalize(raw_terms: Iterable, n: int, masses=None) -> CubicNonlinearity:
    """Merge raw ``(component, factors, coeff)`` terms into canonical form.

    Factor triples are sorted so that permuted copies of a monomial merge by
    coefficient addition; zero sums are dropped.
    """
    if not isinstance(n, int) or n < 1:
        raise NonlinearityError(f"component count must be a positive integer, got {n!r}")
    masses = tuple(_to_scalar(m) for m in (masses if masses is not None else [1] * n))
    if len(masses) != n:
        raise NonlinearityError(f"expected {n} masses, got {len(masses)}")
    if any(m == 0 for m in masses):
        raise NonlinearityError("masses must be nonzero (m_j != 0)")
    acc: dict = {}
    for entry in raw_terms:
        try:
            j, factors, coeff = entry
        except (TypeError, ValueError) as exc:
            raise NonlinearityError(f"bad term {entry!r}") from exc
        j = int(j)
        if not 1 <= j <= n:
            raise NonlinearityError(f"component index {j} outside 1..{n}")
        factors = [tuple(int(v) for v in f) for f in factors]
        if len(factors) != 3:
            raise NonlinearityError(f"term must have exactly 3 factors, got {len(factors)}")
        for k, l in factors:
            if not 1 <= k <= 2 * n:
                raise NonlinearityError(f"factor index {k} outside 1..{2 * n}")
            if l not in (0, 1):
                raise NonlinearityError(f"derivative order {l} not in {{0, 1}}")
        key = (j, tuple(sorted(factors)))
        acc[key] = acc.get(key, Coef()) + Coef.of(coeff)
    terms = tuple(sorted((k, c) for k, c in acc.items() if not c.is_zero()))
    return CubicNonlinearity(n=n, masses=masses, terms=terms)


def _require_single(N: CubicNonlinearity, what: str):
    if N.n != 1:
        raise NonlinearityError(f"{what} is defined for single equations only (n=1), got n={N.n}")


def is_gauge_invariant(N: CubicNonlinearity) -> bool:
    """Whether ``N(e^{i theta}, 0) = e^{i theta} N(1, 0)``.

    Only the derivative-free monomials ``u^3``, ``u conj(u)^2`` and
    ``conj(u)^3`` can break it.
    """
    _require_single(N, "gauge invariance")
    for (_, tri), c in N.terms:
        if all(l == 0 for _, l in tri) and N.winding(tri) != 1 and not c.is_zero():
            return False
    return True


@dataclass(frozen=True)
class NuPolynomial:
    """``nu(xi) = sum_d coeffs[d] * xi**d`` with ``d <= 3``."""

    coeffs: tuple

    def __post_init__(self):
        c = tuple(Coef.of(v) for v in self.coeffs)
        if len(c) > 4:
            raise NonlinearityError("nu has degree at most 3")
        object.__setattr__(self, "coeffs", c + (Coef(),) * (4 - len(c)))

    @property
    def exact(self) -> bool:
        return all(c.exact for c in self.coeffs)

    @property
    def degree(self) -> int:
        nz = [d for d, c in enumerate(self.coeffs) if not c.is_zero()]
        return max(nz) if nz else -1

    def imag_coeffs(self) -> tuple:
        return tuple(c.im for c in self.coeffs)

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape, dtype=np.complex128)
        for c in reversed(self.coeffs):
            out = out * xi + complex(c)
        return out

    def shifted(self, a) -> "NuPolynomial":
        """The polynomial ``xi -> nu(xi - a)``."""
        a = _to_scalar(a)
        new = [Coef() for _ in range(4)]
        binom = [[1], [1, 1], [1, 2, 1], [1, 3, 3, 1]]
        for d, c in enumerate(self.coeffs):
            for e in range(d + 1):
                # (xi - a)^d = sum_e binom * xi^e * (-a)^(d-e)
                new[e] = new[e] + c * (binom[d][e] * (-a) ** (d - e))
        return NuPolynomial(tuple(new))

    def to_json(self) -> list:
        return [c.to_json() for c in self.coeffs]


def nu_polynomial(N: CubicNonlinearity) -> NuPolynomial:
    """Residue polynomial ``nu(xi) = (2 pi i)^-1 \\oint N(z, i xi z) dz / z^2``.

    Only monomials with two unconjugated and one conjugated factor survive the
    residue; each contributes ``C (i xi)^a (-i xi)^b`` where ``a`` (``b``)
    counts differentiated unconjugated (conjugated) factors.
    """
    _require_single(N, "nu")
    if N.masses[0] != 1:
        raise NonlinearityError("nu is only defined for unit mass m_1 = 1")
    coeffs = [Coef() for _ in range(4)]
    for (_, tri), c in N.terms:
        if N.winding(tri) != 1:
            continue
        a = sum(l for k, l in tri if k == 1)
        b = sum(l for k, l in tri if k == 2)
        # i^a (-i)^b = i^(a + 3b)
        coeffs[a + b] = coeffs[a + b] + c.times_i(a + 3 * b)
    return NuPolynomial(tuple(coeffs))


def p_eval(N: CubicNonlinearity, xi, Y) -> np.ndarray:
    """Evaluate the quartic-form vector ``p(xi; Y)``.

    ``Y`` has leading dimension ``n``; trailing dimensions broadcast against
    ``xi``.  Returns an array of shape ``(n, *broadcast_shape)``.
    """
    Y = np.asarray(Y, dtype=np.complex128)
    if Y.ndim == 0 or Y.shape[0] != N.n:
        raise NonlinearityError(f"Y must have leading dimension n={N.n}, got shape {Y.shape}")
    xi = np.asarray(xi, dtype=float)
    shape = np.broadcast_shapes(Y.shape[1:], xi.shape)
    Yt = np.concatenate([Y, Y.conj()], axis=0)
    out = np.zeros((N.n,) + shape, dtype=np.complex128)
    for (j, tri), c in N.terms:
        term = complex(c)
        for k, l in tri:
            factor = Yt[k - 1]
            if l:
                factor = 1j * float(N.mass_tilde(k)) * xi * factor
            term = term * factor
        out[j - 1] += term
    return out


# -- catalog ---------------------------------------------------------------

_MINUS_I = (0, -1)
_CATALOG_RAW = {
    "kita_dissipative": dict(n=1, terms=[(1, [(1, 0), (1, 0), (2, 0)], _MINUS_I)]),
    "weak_grad": dict(n=1, terms=[(1, [(1, 0), (1, 1), (2, 1)], _MINUS_I)]),
    "cubic_conservative": dict(n=1, terms=[(1, [(1, 0), (1, 0), (2, 0)], (1, 0))]),
    "real_grad": dict(n=1, terms=[(1, [(1, 0), (2, 0), (1, 1)], (0, 1))]),
    "two_component_lnss": dict(n=2, terms=[
        (1, [(1, 0), (2, 0), (4, 0)], _MINUS_I),
        (2, [(2, 0), (1, 0), (3, 0)], _MINUS_I),
    ]),
}

CATALOG_DESCRIPTIONS = {
    "kita_dissipative": "-i|u|^2 u (cubic, Im lambda < 0)",
    "weak_grad": "-i|u_x|^2 u (weakly dissipative, Im nu = -xi^2)",
    "cubic_conservative": "|u|^2 u (real lambda, no L2 decay)",
    "real_grad": "i|u|^2 u_x (nu = -xi, real)",
    "two_component_lnss": "N1 = -i|u2|^2 u1, N2 = -i|u1|^2 u2",
}


def catalog_names() -> list[str]:
    return list(_CATALOG_RAW)


def catalog(name: str) -> CubicNonlinearity:
    try:
        spec = _CATALOG_RAW[name]
    except KeyError:
        raise NonlinearityError(
            f"unknown catalog nonlinearity {name!r}; known: {', '.join(_CATALOG_RAW)}") from None
    return canonicalize(spec["terms"], n=spec["n"], masses=spec.get("masses"))


def load_nonlinearity(source) -> CubicNonlinearity:
    """Resolve a catalog name, a JSON file path, or an already-parsed dict."""
    if isinstance(source, CubicNonlinearity):
        return source
    if isinstance(source, Mapping):
        return CubicNonlinearity.from_json(source)
    source = str(source)
    if source in _CATALOG_RAW:
        return catalog(source)
    path = Path(source)
    if not path.exists():
        raise NonlinearityError(f"{source!r} is neither a catalog name nor a file")
    with open(path) as fh:
        obj = json.load(fh, parse_float=Fraction)
    return CubicNonlinearity.from_json(obj)
