"""Interaction-picture pseudospectral solver.

The unknown is the profile ``alpha_j(t, xi) = F[U_{m_j}(-t) u_j(t)](xi)`` with
``U_m(t) = exp(i t d_x^2 / (2 m))``.  It obeys

    d alpha_j / dt = -i F U_{m_j}(-t) N_j(u, d_x u),

which vanishes identically for free evolution.

Two evaluations of the right-hand side share the state and the grid:

``periodic``
    ``u_j = F^-1[exp(-i t xi^2 / 2m) alpha_j]`` on the box ``[-L, L)``.  Exact
    while the dispersed solution stays inside the box.

``similarity``
    Uses the factorisation ``U_m(t) = M D F M`` with the chirp
    ``M = exp(i m x^2 / 2t)``:

        u_j(t, t y / m) = sqrt(m / (i t)) exp(i t y^2 / 2m) W_j(t, y),
        W_j = F[M F^-1 alpha_j],

    so the physical field is sampled on the dilated grid ``x = t y / m`` that
    grows with ``t`` and never wraps.  Requires equal masses and mass-resonant
    terms, for which every chirp cancels in the products.  Valid once the chirp
    is resolved on the box, i.e. for ``t`` above ``|m| L / xi_max``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import kernels
from .classify import check_mass_resonance
from .nonlin import CubicNonlinearity

SQRT_2PI = math.sqrt(2.0 * math.pi)


class SimulationDiverged(RuntimeError):
    """Non-finite values appeared in the state."""

    def __init__(self, t: float):
        super().__init__(f"simulation diverged at t = {t:.6g}")
        self.t = t


@dataclass(frozen=True)
class Grid1D:
    """Periodic box ``[-L, L)`` with ``M`` points and its centred frequencies.

    Frequencies are ``xi_k = pi k / L`` for ``k = -M/2 .. M/2-1``; all spectral
    arrays in this package use that (centred, increasing) order.
    """

    L: float = 60.0
    M: int = 2048
    dealias: bool = True

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"half length L must be positive, got {self.L}")
        if self.M < 4 or self.M & (self.M - 1):
            raise ValueError(f"M must be a power of two, got {self.M}")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.M

    @property
    def dxi(self) -> float:
        return math.pi / self.L

    @property
    def xi_max(self) -> float:
        return math.pi * self.M / (2.0 * self.L)

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.M)

    @property
    def k(self) -> np.ndarray:
        return np.arange(-self.M // 2, self.M // 2)

    @property
    def xi(self) -> np.ndarray:
        return self.dxi * self.k

    @property
    def xi_mask(self) -> np.ndarray:
        """Modes kept by the 2/3 rule (all modes when dealiasing is off)."""
        if not self.dealias:
            return np.ones(self.M, dtype=bool)
        return np.abs(self.k) <= self.M // 3

    @property
    def x_mask(self) -> np.ndarray:
        """Physical-space analogue of the 2/3 rule used by the similarity form."""
        if not self.dealias:
            return np.ones(self.M, dtype=bool)
        return np.abs(self.x) <= 2.0 * self.L / 3.0

    def to_json(self) -> dict:
        return {"L": self.L, "M": self.M, "dealias": self.dealias}


def _sign(grid: Grid1D) -> np.ndarray:
    # exp(-i xi_k x_0) with x_0 = -L is (-1)^k
    return np.where(grid.k % 2 == 0, 1.0, -1.0)


def fourier_forward(f, grid: Grid1D) -> np.ndarray:
    """``(2 pi)^-1/2 int exp(-i x xi) f(x) dx`` sampled at the grid frequencies."""
    f = np.asarray(f)
    if f.shape[-1] != grid.M:
        raise ValueError(f"expected trailing length {grid.M}, got {f.shape[-1]}")
    F = np.fft.fftshift(np.fft.fft(f, axis=-1), axes=-1)
    return F * (_sign(grid) * (grid.dx / SQRT_2PI))


def fourier_inverse(fhat, grid: Grid1D) -> np.ndarray:
    """Exact inverse of :func:`fourier_forward`."""
    fhat = np.asarray(fhat)
    if fhat.shape[-1] != grid.M:
        raise ValueError(f"expected trailing length {grid.M}, got {fhat.shape[-1]}")
    g = np.fft.ifft(np.fft.ifftshift(fhat * _sign(grid), axes=-1), axis=-1)
    return g * (grid.M * grid.dxi / SQRT_2PI)


def gaussian(x, amplitude=1.0, center=0.0, width=1.0, shift=0.0) -> np.ndarray:
    """``amplitude * exp(-(x-center)^2 / (2 width^2) + i shift x)``."""
    x = np.asarray(x, dtype=float)
    return amplitude * np.exp(-((x - center) ** 2) / (2.0 * width ** 2) + 1j * shift * x)


def gaussian_hat(xi, amplitude=1.0, center=0.0, width=1.0, shift=0.0) -> np.ndarray:
    """Analytic transform of :func:`gaussian` under the unitary convention."""
    xi = np.asarray(xi, dtype=float)
    s = xi - shift
    return amplitude * width * np.exp(-(width * s) ** 2 / 2.0 - 1j * s * center)


class _Terms:
    """Precomputed term tables for one nonlinearity."""

    def __init__(self, N: CubicNonlinearity):
        self.N = N
        self.n = N.n
        self.table, self.coeffs = N.term_table()
        rows = set(self.table[:, 1:].ravel().tolist())
        self.rows = sorted(rows)
        self.needs_derivative = any(r % 2 for r in rows)

    def accumulate(self, fields, out):
        return kernels.cubic_accumulate(fields, self.table, self.coeffs, out)


def _fields(base, deriv, n, rows):
    """Stack ``v_k`` and ``d_x v_k`` rows (conjugates for ``k > n``)."""
    M = base.shape[-1]
    fields = np.zeros((4 * n, M), dtype=np.complex128)
    for r in rows:
        k, l = r // 2, r % 2
        src = deriv if l else base
        fields[r] = src[k] if k < n else np.conj(src[k - n])
    return fields


def evaluate_nonlinearity(N: CubicNonlinearity, u, grid: Grid1D) -> np.ndarray:
    """Pointwise ``N_j(u, d_x u)`` on the periodic grid.

    Derivatives are spectral.  With ``grid.dealias`` the inputs and each
    component of the result are projected onto the 2/3-rule modes.
    """
    terms = _Terms(N)
    u = np.atleast_2d(np.asarray(u, dtype=np.complex128))
    uhat = fourier_forward(u, grid)
    mask = grid.xi_mask
    uhat = uhat * mask
    base = fourier_inverse(uhat, grid)
    deriv = fourier_inverse(1j * grid.xi * uhat, grid) if terms.needs_derivative else None
    out = np.zeros((N.n, grid.M), dtype=np.complex128)
    terms.accumulate(_fields(base, deriv, N.n, terms.rows), out)
    if grid.dealias:
        out = fourier_inverse(fourier_forward(out, grid) * mask, grid)
    return out


@dataclass
class SimState:
    """Solver state: time and the profiles ``alpha[j, k] ~ alpha_j(t, xi_k)``."""

    t: float
    alpha: np.ndarray
    masses: tuple
    grid: Grid1D

    @property
    def n(self) -> int:
        return self.alpha.shape[0]


def similarity_threshold(grid: Grid1D, mass: float) -> float:
    """Earliest time at which the chirp ``exp(i m x^2/2t)`` is resolved with margin 2."""
    return 2.0 * abs(mass) * grid.L / grid.xi_max


class Propagator:
    """Right-hand side and RK4 stepping for one nonlinearity on one grid.

    ``similarity`` is ``"auto"`` (switch at :func:`similarity_threshold` when
    allowed), ``"off"``, or an explicit switch time.
    """

    def __init__(self, N: CubicNonlinearity, grid: Grid1D,
                 similarity: Union[str, float] = "auto"):
        self.N = N
        self.grid = grid
        self.terms = _Terms(N)
        self.masses = np.array([float(m) for m in N.masses])
        self.similarity_allowed = bool(
            np.all(self.masses == self.masses[0]) and not check_mass_resonance(N))
        if similarity == "off" or not self.similarity_allowed:
            self.t_switch = math.inf
        elif similarity == "auto":
            self.t_switch = similarity_threshold(grid, self.masses[0])
        else:
            self.t_switch = float(similarity)
        self._xi = grid.xi
        self._xi2 = grid.xi ** 2
        self._x = grid.x
        self._xi_mask = grid.xi_mask
        self._x_mask = grid.x_mask.astype(float)

    def mode(self, t: float) -> str:
        return "similarity" if t >= self.t_switch else "periodic"

    # -- periodic form ----------------------------------------------------
    def _phase(self, t):
        # recomputed from scratch each call; no accumulated phase drift
        return np.exp(-1j * t * self._xi2[None, :] / (2.0 * self.masses[:, None]))

    def physical_periodic(self, t, alpha):
        uhat = self._phase(t) * alpha * self._xi_mask
        return fourier_inverse(uhat, self.grid), uhat

    def _rhs_periodic(self, t, alpha):
        g = self.grid
        n = self.N.n
        u, uhat = self.physical_periodic(t, alpha)
        ux = fourier_inverse(1j * self._xi * uhat, g) if self.terms.needs_derivative else None
        out = np.zeros((n, g.M), dtype=np.complex128)
        self.terms.accumulate(_fields(u, ux, n, self.terms.rows), out)
        Nhat = fourier_forward(out, g) * self._xi_mask
        return -1j * np.conj(self._phase(t)) * Nhat

    # -- similarity form --------------------------------------------------
    def similarity_profile(self, t, alpha):
        """``W = F[M F^-1 alpha]`` and, if needed, ``dW/dy``."""
        m = self.masses[0]
        chirp = np.exp(1j * m * self._x ** 2 / (2.0 * t))
        gx = chirp * fourier_inverse(alpha, self.grid) * self._x_mask
        W = fourier_forward(gx, self.grid)
        Wy = fourier_forward(-1j * self._x * gx, self.grid) if self.terms.needs_derivative else None
        return W, Wy, chirp

    def _rhs_similarity(self, t, alpha):
        g = self.grid
        n = self.N.n
        m = self.masses[0]
        W, Wy, chirp = self.similarity_profile(t, alpha)
        D = 1j * self._xi * W + (m / t) * Wy if Wy is not None else None
        h = np.zeros((n, g.M), dtype=np.complex128)
        self.terms.accumulate(_fields(W, D, n, self.terms.rows), h)
        h *= abs(m) / t
        back = np.conj(chirp) * fourier_inverse(h, g) * self._x_mask
        return -1j * fourier_forward(back, g)

    def rhs(self, t: float, alpha: np.ndarray, mode: Optional[str] = None) -> np.ndarray:
        """``d alpha / dt`` at time ``t``."""
        mode = mode or self.mode(t)
        if mode == "similarity":
            if t <= 0:
                raise ValueError("similarity form needs t > 0")
            return self._rhs_similarity(t, alpha)
        return self._rhs_periodic(t, alpha)

    def step_rk4(self, t: float, alpha: np.ndarray, dt: float) -> np.ndarray:
        """One classical RK4 step; the evaluation form is fixed by the step start."""
        mode = self.mode(t)
        k1 = self.rhs(t, alpha, mode)
        k2 = self.rhs(t + 0.5 * dt, alpha + 0.5 * dt * k1, mode)
        k3 = self.rhs(t + 0.5 * dt, alpha + 0.5 * dt * k2, mode)
        k4 = self.rhs(t + dt, alpha + dt * k3, mode)
        return alpha + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    # -- observables ------------------------------------------------------
    def physical_field(self, t: float, alpha: np.ndarray):
        """``(x, u)`` with ``x`` of shape ``(n, M)`` in the active representation."""
        if self.mode(t) == "similarity":
            m = self.masses[0]
            W, _, _ = self.similarity_profile(t, alpha)
            y = self._xi
            c = np.sqrt(m / (1j * t))
            u = c * np.exp(1j * t * y ** 2 / (2.0 * m)) * W
            return np.broadcast_to(t * y / m, u.shape), u
        u, _ = self.physical_periodic(t, alpha)
        return np.broadcast_to(self._x, u.shape), u

    def linf(self, t, alpha) -> np.ndarray:
        _, u = self.physical_field(t, alpha)
        return np.abs(u).max(axis=-1)

    def boundary_strip(self, t, alpha, frac: float = 0.9) -> float:
        """Mass within the outer 10% of the box in both ``x`` and ``xi``.

        Large values mean the truncation to a finite box is being felt.
        """
        g = self.grid
        edge_xi = np.abs(self._xi) > frac * g.xi_max
        edge_x = np.abs(self._x) > frac * g.L
        if self.mode(t) == "similarity":
            W, _, _ = self.similarity_profile(t, alpha)
            xs = fourier_inverse(alpha, g)
            return float(np.sum(np.abs(xs[:, edge_x]) ** 2) * g.dx
                         + np.sum(np.abs(W[:, edge_xi]) ** 2) * g.dxi)
        u, _ = self.physical_periodic(t, alpha)
        return float(np.sum(np.abs(u[:, edge_x]) ** 2) * g.dx
                     + np.sum(np.abs(alpha[:, edge_xi]) ** 2) * g.dxi)


def rhs(state: SimState, N: CubicNonlinearity, similarity="auto") -> np.ndarray:
    return Propagator(N, state.grid, similarity).rhs(state.t, state.alpha)


def step_rk4(state: SimState, dt: float, N: CubicNonlinearity, similarity="auto") -> SimState:
    prop = Propagator(N, state.grid, similarity)
    alpha = prop.step_rk4(state.t, state.alpha, dt)
    if not np.all(np.isfinite(alpha)):
        raise SimulationDiverged(state.t + dt)
    return replace(state, t=state.t + dt, alpha=alpha)


@dataclass(frozen=True)
class SolverConfig:
    """Time stepping and output schedule.

    Steps are ``fixed_dt`` if given, otherwise ``dt0`` for ``t < 1`` and
    ``dt0 * t`` afterwards (constant steps in ``log t``), capped by ``dt_max``.
    Snapshots are taken at ``t = 0``, at ``per_decade`` log-spaced times from
    ``t_first`` to ``t_end``, and at ``extra_times``.
    """

    t_end: float = 1.0e4
    dt0: float = 0.01
    fixed_dt: Optional[float] = None
    dt_max: float = math.inf
    per_decade: int = 20
    t_first: float = 1.0
    extra_times: tuple = (2.0,)
    similarity: Union[str, float] = "auto"

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.fixed_dt is not None and not self.fixed_dt > 0:
            raise ValueError("fixed_dt must be positive")
        if not self.dt0 > 0:
            raise ValueError("dt0 must be positive")

    def dt(self, t: float) -> float:
        if self.fixed_dt is not None:
            return self.fixed_dt
        return min(self.dt_max, self.dt0 * max(1.0, t))

    def output_times(self) -> np.ndarray:
        times = {0.0, float(self.t_end)}
        if self.per_decade > 0 and self.t_end > self.t_first:
            count = int(round(self.per_decade * math.log10(self.t_end / self.t_first))) + 1
            times.update(np.geomspace(self.t_first, self.t_end, max(count, 2)).tolist())
        times.update(float(t) for t in self.extra_times if 0 < t <= self.t_end)
        return np.array(sorted(times))

    def to_json(self) -> dict:
        return {
            "t_end": self.t_end, "dt0": self.dt0, "fixed_dt": self.fixed_dt,
            "dt_max": None if math.isinf(self.dt_max) else self.dt_max,
            "per_decade": self.per_decade, "t_first": self.t_first,
            "extra_times": list(self.extra_times), "similarity": self.similarity,
        }


@dataclass
class Trajectory:
    """Snapshots of a run plus per-step mass bookkeeping."""

    N: CubicNonlinearity
    grid: Grid1D
    config: SolverConfig
    times: np.ndarray
    alpha: np.ndarray                 # (snapshots, n, M)
    l2: np.ndarray                    # (snapshots, n)
    linf: np.ndarray                  # (snapshots, n)
    strip: np.ndarray                 # (snapshots,)
    step_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    step_mass: np.ndarray = field(default_factory=lambda: np.zeros(0))
    step_mass_diff: np.ndarray = field(default_factory=lambda: np.zeros(0))
    t_switch: float = math.inf

    @property
    def n(self) -> int:
        return self.alpha.shape[1]

    @property
    def mass_total(self) -> np.ndarray:
        return np.sum(self.l2 ** 2, axis=1)

    @property
    def mass_diff(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros(len(self.times))
        return self.l2[:, 0] ** 2 - self.l2[:, 1] ** 2

    def state(self, index: int) -> SimState:
        return SimState(float(self.times[index]), self.alpha[index], self.N.masses, self.grid)

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[i], t, rel_tol=1e-9, abs_tol=1e-12):
            raise KeyError(f"no snapshot at t = {t}")
        return i


def initial_alpha(phi, grid: Grid1D) -> np.ndarray:
    """``alpha(0) = F phi`` projected onto the kept modes."""
    phi = np.atleast_2d(np.asarray(phi, dtype=np.complex128))
    return fourier_forward(phi, grid) * grid.xi_mask


def _l2(alpha, grid):
    return np.sqrt(np.sum(np.abs(alpha) ** 2, axis=-1) * grid.dxi)


def run(N: CubicNonlinearity, phi, grid: Grid1D, config: SolverConfig,
        progress=None) -> Trajectory:
    """Integrate from ``u(0) = phi`` and record snapshots at the output schedule.

    ``phi`` has shape ``(n, M)`` (or ``(M,)`` for ``n = 1``).  Raises
    :class:`SimulationDiverged` on non-finite values.
    """
    prop = Propagator(N, grid, config.similarity)
    alpha = initial_alpha(phi, grid)
    if alpha.shape[0] != N.n:
        raise ValueError(f"initial data has {alpha.shape[0]} components, nonlinearity has {N.n}")
    schedule = config.output_times()
    snaps, step_t, step_mass, step_diff = [], [], [], []

    def record_step(t, a):
        with np.errstate(over="ignore"):
            m2 = np.sum(np.abs(a) ** 2, axis=-1) * grid.dxi
        if not np.all(np.isfinite(m2)):
            raise SimulationDiverged(t)
        step_t.append(t)
        step_mass.append(float(m2.sum()))
        step_diff.append(float(m2[0] - m2[1]) if N.n >= 2 else 0.0)

    def snapshot(t, a):
        snaps.append((t, a.copy(), _l2(a, grid), prop.linf(t, a), prop.boundary_strip(t, a)))

    t = 0.0
    snapshot(t, alpha)
    record_step(t, alpha)
    for target in schedule[1:]:
        while t < target:
            dt = config.dt(t)
            hit = t + dt >= target * (1.0 - 1e-12)
            if hit:
                dt = target - t
            with np.errstate(over="ignore", invalid="ignore"):
                alpha = prop.step_rk4(t, alpha, dt)
            t = float(target) if hit else t + dt
            if not np.all(np.isfinite(alpha)):
                raise SimulationDiverged(t)
            record_step(t, alpha)
        snapshot(t, alpha)
        if progress is not None:
            progress(t)

    times = np.array([s[0] for s in snaps])
    return Trajectory(
        N=N, grid=grid, config=config, times=times,
        alpha=np.stack([s[1] for s in snaps]),
        l2=np.stack([s[2] for s in snaps]),
        linf=np.stack([s[3] for s in snaps]),
        strip=np.array([s[4] for s in snaps]),
        step_t=np.array(step_t), step_mass=np.array(step_mass),
        step_mass_diff=np.array(step_diff), t_switch=prop.t_switch,
    )
