"""Post-processing of trajectories: decay fits, survivor function, decoupling."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .nonlin import CubicNonlinearity, p_eval
from .spectral import (Grid1D, Propagator, SimState, SolverConfig, Trajectory,
                       fourier_forward, fourier_inverse, initial_alpha, run,
                       similarity_threshold)

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class DecayFit:
    """Least-squares fit ``log|u| = log C - p log(1 + eps^2 log t)``."""

    exponent: float
    amplitude: float
    window: tuple
    residual_rms: float
    samples: int
    norm_kind: str = "L2"
    component: int = 1

    def to_json(self) -> dict:
        return {
            "p": self.exponent, "C": self.amplitude, "window": list(self.window),
            "residual_rms": self.residual_rms, "samples": self.samples,
            "norm": self.norm_kind, "component": self.component,
        }


def fit_log_decay(times, norms, eps: float, window=(1e2, 1e4), *,
                  norm_kind: str = "L2", component: int = 1) -> DecayFit:
    """Fit the logarithmic decay exponent over ``window``.

    Needs at least 10 samples inside the window, all norms positive.
    """
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    lo, hi = window
    sel = (times >= lo) & (times <= hi)
    t, y = times[sel], norms[sel]
    if t.size < 10:
        raise ValueError(f"need at least 10 samples in the window, got {t.size}")
    if np.ptp(t) == 0:
        raise ValueError("degenerate window: all times equal")
    if np.any(y <= 0):
        raise ValueError("norms must be positive to take logarithms")
    X = np.log1p(eps ** 2 * np.log(t))
    A = np.stack([np.ones_like(X), -X], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    resid = np.log(y) - A @ coef
    return DecayFit(
        exponent=float(coef[1]), amplitude=float(np.exp(coef[0])),
        window=(float(t.min()), float(t.max())),
        residual_rms=float(np.sqrt(np.mean(resid ** 2))), samples=int(t.size),
        norm_kind=norm_kind, component=component,
    )


# -- remainders and the survivor function --------------------------------

def _check_pair(N: CubicNonlinearity):
    if N.n != 2:
        raise ValueError(f"two-component nonlinearity required, got n={N.n}")
    if N.masses[0] != N.masses[1]:
        raise ValueError("remainders are defined here for equal masses only")


def remainder_diagnostics(state: SimState, N: CubicNonlinearity, prop: Optional[Propagator] = None):
    """Return ``(R, rho)`` at the state's time.

    ``R_j`` is the exact right-hand side minus its large-time limit
    ``-i (|m|/t) p_j(xi/m; alpha)``; for the two-component system this is
    ``R_1 = |alpha_2|^2 alpha_1 / t - F U(-t)[|u_2|^2 u_1]``.
    ``rho = 2 Re[conj(alpha_1) R_1 - conj(alpha_2) R_2]``.
    """
    _check_pair(N)
    t = state.t
    if t < 1:
        raise ValueError(f"remainders need t >= 1, got t = {t}")
    prop = prop or Propagator(N, state.grid)
    m = float(N.masses[0])
    alpha = state.alpha
    limit = -1j * (abs(m) / t) * p_eval(N, state.grid.xi / m, alpha)
    R = prop.rhs(t, alpha) - limit
    rho = 2.0 * np.real(np.conj(alpha[0]) * R[0] - np.conj(alpha[1]) * R[1])
    return R, rho


@dataclass
class MEstimate:
    """Survivor function estimate at the final time ``T``.

    ``m_hat`` is ``|alpha_1(T)|^2 - |alpha_2(T)|^2``; ``m_check`` the
    anchored form ``|alpha_1(t0)|^2 - |alpha_2(t0)|^2 + int_t0^T rho``.  Their
    difference is the reported ``tail``.
    """

    xi: np.ndarray
    m_hat: np.ndarray
    m_check: np.ndarray
    T: float
    t_anchor: float
    method: str = "large_T_difference"
    rho_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def tail(self) -> np.ndarray:
        return np.abs(self.m_hat - self.m_check)


def _diff2(alpha):
    return np.abs(alpha[0]) ** 2 - np.abs(alpha[1]) ** 2


def estimate_m(traj: Trajectory, t_anchor: float = 2.0) -> MEstimate:
    """Estimate the survivor function from a two-component trajectory.

    The integral of ``rho`` uses the trapezoid rule in ``log t`` over every
    snapshot from ``t_anchor`` to the final time.
    """
    _check_pair(traj.N)
    try:
        i0 = traj.index_of(t_anchor)
    except KeyError:
        raise ValueError(f"trajectory has no snapshot at t = {t_anchor}") from None
    if len(traj.times) - i0 < 2:
        raise ValueError("need intermediate snapshots after the anchor time")
    prop = Propagator(traj.N, traj.grid, traj.config.similarity)
    rhos = []
    for i in range(i0, len(traj.times)):
        _, rho = remainder_diagnostics(traj.state(i), traj.N, prop)
        rhos.append(traj.times[i] * rho)
    taus = np.log(traj.times[i0:])
    integral = _trapezoid(np.array(rhos), taus, axis=0)
    return MEstimate(
        xi=traj.grid.xi, m_hat=_diff2(traj.alpha[-1]),
        m_check=_diff2(traj.alpha[i0]) + integral,
        T=float(traj.times[-1]), t_anchor=float(traj.times[i0]),
        rho_times=traj.times[i0:].copy(),
    )


def leading_prediction(psi_hat, eps: float) -> np.ndarray:
    """``eps^2 (|psi_hat_1|^2 - |psi_hat_2|^2)``."""
    return eps ** 2 * _diff2(np.asarray(psi_hat))


def sign_agreement(m_hat, prediction, frac: float = 0.1):
    """Compare signs where ``|prediction|`` exceeds ``frac`` of its maximum.

    Returns ``(all_agree, mask)``.
    """
    prediction = np.asarray(prediction)
    mask = np.abs(prediction) > frac * np.abs(prediction).max()
    agree = np.sign(m_hat[mask]) == np.sign(prediction[mask])
    return bool(np.all(agree)), mask


@dataclass
class EpsilonReport:
    eps: list
    r: list
    ratios: list
    scaled_error: list   # sup |m_hat / eps^2 - (|psi1|^2 - |psi2|^2)|

    def to_json(self) -> dict:
        return {"eps": self.eps, "r": self.r, "ratio": self.ratios,
                "scaled_error": self.scaled_error}


def _eps_job(args):
    N, psi, eps, grid, config = args
    traj = run(N, eps * psi, grid, config)
    return _diff2(traj.alpha[-1])


def verify_epsilon_expansion(N: CubicNonlinearity, psi, eps_list: Sequence[float],
                             grid: Grid1D, config: SolverConfig, jobs: int = 1) -> EpsilonReport:
    """Measure ``r(eps) = sup |m_hat - eps^2 (|psi1^|^2 - |psi2^|^2)|`` per ``eps``.

    ``eps_list`` must be a geometric progression; ``ratios[i]`` is
    ``r(eps_i) / r(eps_{i+1})`` (16 for a clean ``eps^4`` remainder at halving).
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 2:
        raise ValueError("need at least two eps values")
    q = [b / a for a, b in zip(eps_list, eps_list[1:])]
    if not np.allclose(q, q[0], rtol=1e-9):
        raise ValueError("eps values must form a geometric progression")
    psi = np.asarray(psi, dtype=np.complex128)
    delta = _diff2(initial_alpha(psi, grid))
    jobs_args = [(N, psi, e, grid, config) for e in eps_list]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            m_hats = list(ex.map(_eps_job, jobs_args))
    else:
        m_hats = [_eps_job(a) for a in jobs_args]
    r = [float(np.abs(m - e ** 2 * delta).max()) for m, e in zip(m_hats, eps_list)]
    scaled = [float(np.abs(m / e ** 2 - delta).max()) for m, e in zip(m_hats, eps_list)]
    ratios = [a / b if b > 0 else math.inf for a, b in zip(r, r[1:])]
    return EpsilonReport(eps_list, r, ratios, scaled)


# -- decoupling and scattering states ------------------------------------

def decoupling_metric(state) -> float:
    """``max_xi |alpha_1 alpha_2|``."""
    alpha = state.alpha if hasattr(state, "alpha") else np.asarray(state)
    return float(np.abs(alpha[0] * alpha[1]).max())


def decoupling_series(traj: Trajectory):
    return traj.times.copy(), np.abs(traj.alpha[:, 0] * traj.alpha[:, 1]).max(axis=1)


@dataclass
class ScatterState:
    """Final-time profiles standing in for the scattering data ``phi_hat^+``."""

    xi: np.ndarray
    phi_hat: np.ndarray
    T: float

    @property
    def product(self) -> Optional[np.ndarray]:
        if self.phi_hat.shape[0] != 2:
            return None
        return np.abs(self.phi_hat[0] * self.phi_hat[1])


def extract_scattering_state(traj: Trajectory) -> ScatterState:
    return ScatterState(traj.grid.xi.copy(), traj.alpha[-1].copy(), float(traj.times[-1]))


def survivor_identity(scatter: ScatterState, m_hat, frac: float = 0.5, ratio: float = 0.2):
    """Where ``m_hat`` exceeds ``frac`` of its maximum the losing component must be small.

    Checks ``|phi_2^+| < ratio |phi_1^+|`` where ``m_hat > 0`` and the mirror
    statement where ``m_hat < 0``.  Returns ``(holds, worst_ratio)``.
    """
    m_hat = np.asarray(m_hat)
    top = np.abs(m_hat).max()
    a1, a2 = np.abs(scatter.phi_hat[0]), np.abs(scatter.phi_hat[1])
    pos = m_hat > frac * top
    neg = m_hat < -frac * top
    worst = max([float((a2[pos] / a1[pos]).max()) if pos.any() else 0.0,
                 float((a1[neg] / a2[neg]).max()) if neg.any() else 0.0])
    return worst < ratio, worst


# -- factorised large-time approximation ---------------------------------

@dataclass
class ReconstructionError:
    t: float
    error: np.ndarray        # per component L-infinity difference
    x_window: tuple


def profile_reconstruction_error(state: SimState, masses=None) -> ReconstructionError:
    """Distance between ``u_j(t)`` and ``sqrt(m/(i t)) alpha_j(t, m x/t) exp(i m x^2/2t)``.

    Once the chirp is resolved the field lives on ``x = t xi / m`` and the
    comparison is exact on that grid; earlier, ``alpha`` is interpolated onto
    the box points with ``|m x / t| <= xi_max``.
    """
    t = state.t
    if t < 1:
        raise ValueError(f"need t >= 1, got {t}")
    grid = state.grid
    masses = np.array([float(m) for m in (masses if masses is not None else state.masses)])
    xi = grid.xi
    errs = []
    window = (math.inf, -math.inf)
    for j, m in enumerate(masses):
        alpha = state.alpha[j]
        c = np.sqrt(m / (1j * t))
        if t >= similarity_threshold(grid, m):
            gx = np.exp(1j * m * grid.x ** 2 / (2 * t)) * fourier_inverse(alpha, grid) * grid.x_mask
            W = fourier_forward(gx, grid)
            errs.append(float(abs(c) * np.abs(W - alpha).max()))
            xs = t * xi / m
        else:
            x = grid.x
            uhat = np.exp(-1j * t * xi ** 2 / (2 * m)) * alpha * grid.xi_mask
            u = fourier_inverse(uhat, grid)
            y = m * x / t
            inside = np.abs(y) <= grid.xi_max * (1 - 2 / grid.M)
            approx = c * np.exp(1j * m * x[inside] ** 2 / (2 * t)) * (
                np.interp(y[inside], xi, alpha.real) + 1j * np.interp(y[inside], xi, alpha.imag))
            errs.append(float(np.abs(u[inside] - approx).max()) if inside.any() else 0.0)
            xs = x[inside]
        if xs.size:
            window = (min(window[0], float(xs.min())), max(window[1], float(xs.max())))
    return ReconstructionError(t, np.array(errs), window)
