import math

import numpy as np
import pytest

from dnls.analysis import (decoupling_metric, decoupling_series, estimate_m, extract_scattering_state,
                           fit_log_decay, leading_prediction, profile_reconstruction_error,
                           remainder_diagnostics, sign_agreement, survivor_identity,
                           verify_epsilon_expansion)
from dnls.nonlin import canonicalize, catalog
from dnls.profile import two_component_profile
from dnls.spectral import (Grid1D, SimState, SolverConfig, fourier_forward, gaussian,
                           initial_alpha, run)

PAIR = catalog("two_component_lnss")


# -- decay fits -------------------------------------------------------------

def test_fit_synthetic_exact():
    t = np.geomspace(1e2, 1e4, 41)
    eps = 0.3
    norms = 3 * (1 + eps ** 2 * np.log(t)) ** -0.25
    f = fit_log_decay(t, norms, eps)
    assert f.exponent == pytest.approx(0.25, abs=1e-12)
    assert f.amplitude == pytest.approx(3.0, abs=1e-12)
    assert f.residual_rms < 1e-12
    assert f.samples == 41 and f.window == (1e2, 1e4)


def test_fit_window_selection_and_errors():
    t = np.geomspace(1, 1e4, 81)
    norms = np.ones_like(t)
    f = fit_log_decay(t, norms, 0.3, window=(1e3, 1e4))
    assert f.samples == 21 and abs(f.exponent) < 1e-12
    with pytest.raises(ValueError, match="10 samples"):
        fit_log_decay(t[:5], norms[:5], 0.3, window=(1, 1e4))
    with pytest.raises(ValueError, match="degenerate"):
        fit_log_decay(np.full(12, 100.0), np.ones(12), 0.3)
    with pytest.raises(ValueError, match="positive"):
        fit_log_decay(t, np.zeros_like(t), 0.3, window=(1, 1e4))


def test_decay_fit_on_runs(decay_runs):
    p = {k: fit_log_decay(tr.times, tr.l2[:, 0], 0.3).exponent for k, tr in decay_runs.items()}
    assert abs(p["A0"]) < 0.05
    assert 0.15 <= p["Weak"] <= 0.35
    assert 0.35 <= p["APlus"] <= 0.65


# -- remainders -------------------------------------------------------------

def test_remainder_vanishes_without_second_component(grid):
    phi = np.array([gaussian(grid.x), np.zeros(grid.M)])
    R, rho = remainder_diagnostics(SimState(5.0, initial_alpha(phi, grid), (1, 1), grid), PAIR)
    assert np.all(R == 0) and np.all(rho == 0)


def test_rho_vanishes_for_symmetric_data(grid):
    phi = 0.3 * np.array([gaussian(grid.x), gaussian(grid.x)])
    R, rho = remainder_diagnostics(SimState(7.0, initial_alpha(phi, grid), (1, 1), grid), PAIR)
    assert np.abs(rho).max() == 0


def test_remainder_decays(crossing_run):
    norms = []
    for t in (10.0, 100.0):
        i = int(np.argmin(np.abs(crossing_run.times - t)))
        R, _ = remainder_diagnostics(crossing_run.state(i), PAIR)
        norms.append(np.sqrt(np.sum(np.abs(R) ** 2) * crossing_run.grid.dxi))
    assert norms[1] < norms[0]


def test_remainder_requires_late_time(grid):
    with pytest.raises(ValueError, match="t >= 1"):
        remainder_diagnostics(SimState(0.5, np.zeros((2, grid.M), complex), (1, 1), grid), PAIR)
    with pytest.raises(ValueError, match="two-component"):
        remainder_diagnostics(SimState(2.0, np.zeros((1, grid.M), complex), (1,), grid),
                              catalog("weak_grad"))


# -- survivor function ------------------------------------------------------

def test_m_estimate_crossing(crossing_run, crossing_data, grid):
    me = estimate_m(crossing_run)
    pred = leading_prediction(fourier_forward(crossing_data, grid), 0.2)
    ok, mask = sign_agreement(me.m_hat, pred)
    assert ok and mask.sum() > 10
    rel = np.abs(me.m_hat - me.m_check)[mask] / np.abs(me.m_hat[mask])
    assert rel.max() < 0.05
    assert me.T == 1e4 and me.t_anchor == 2.0
    assert np.allclose(me.tail, np.abs(me.m_hat - me.m_check))


def test_m_estimate_consistent_with_mass_difference(crossing_run):
    me = estimate_m(crossing_run)
    total = np.sum(me.m_hat) * crossing_run.grid.dxi
    assert abs(total - crossing_run.mass_diff[-1]) <= 1e-6 * np.sum(np.abs(me.m_hat)) * crossing_run.grid.dxi


def test_m_estimate_symmetric_data_is_zero(grid):
    phi = 0.3 * np.array([gaussian(grid.x), gaussian(grid.x)])
    tr = run(PAIR, phi, grid, SolverConfig(t_end=50.0, per_decade=5))
    me = estimate_m(tr)
    assert np.abs(me.m_hat).max() < 1e-8 and np.abs(me.m_check).max() < 1e-8


def test_m_estimate_antisymmetric_under_swap(grid, crossing_data):
    cfg = SolverConfig(t_end=50.0, per_decade=5)
    a = estimate_m(run(PAIR, 0.3 * crossing_data, grid, cfg))
    b = estimate_m(run(PAIR, 0.3 * crossing_data[::-1], grid, cfg))
    assert np.abs(a.m_hat + b.m_hat).max() < 1e-12


def test_m_estimate_needs_anchor(grid, crossing_data):
    tr = run(PAIR, 0.2 * crossing_data, grid, SolverConfig(t_end=10.0, per_decade=2, extra_times=()))
    with pytest.raises(ValueError, match="t = 2"):
        estimate_m(tr)


def test_sign_agreement_threshold():
    pred = np.array([-1.0, -0.05, 0.0, 0.05, 1.0])
    ok, mask = sign_agreement(np.array([-2.0, 3.0, 0.0, -1.0, 0.5]), pred)
    assert ok and mask.tolist() == [True, False, False, False, True]


# -- epsilon scaling --------------------------------------------------------

def test_epsilon_expansion_exact_for_equal_data(grid):
    phi = np.array([gaussian(grid.x), gaussian(grid.x)])
    rep = verify_epsilon_expansion(PAIR, phi, [0.2, 0.1], grid, SolverConfig(t_end=20.0, per_decade=2))
    assert max(rep.r) < 1e-8


def test_epsilon_list_validation(grid, crossing_data):
    with pytest.raises(ValueError, match="two"):
        verify_epsilon_expansion(PAIR, crossing_data, [0.2], grid, SolverConfig(t_end=1.0))
    with pytest.raises(ValueError, match="geometric"):
        verify_epsilon_expansion(PAIR, crossing_data, [0.4, 0.2, 0.15], grid, SolverConfig(t_end=1.0))


def test_leading_term_recovered_as_eps_shrinks(grid, crossing_data):
    rep = verify_epsilon_expansion(PAIR, crossing_data, [0.2, 0.1, 0.05], grid,
                                   SolverConfig(t_end=100.0, per_decade=5))
    assert rep.scaled_error[0] > rep.scaled_error[1] > rep.scaled_error[2]


# -- decoupling -------------------------------------------------------------

def test_decoupling_disjoint_supports(grid):
    a = np.zeros((2, grid.M), complex)
    a[0, : grid.M // 2] = 1.0
    a[1, grid.M // 2:] = 1.0
    assert decoupling_metric(a) == 0.0


def test_decoupling_decreases(crossing_run):
    t, metric = decoupling_series(crossing_run)
    i100 = crossing_run.index_of(100.0)
    assert metric[-1] < metric[i100]
    late = metric[i100:]
    assert np.all(np.diff(late) <= 0)


def test_scattering_state_copies_final_snapshot(crossing_run):
    sc = extract_scattering_state(crossing_run)
    assert np.array_equal(sc.phi_hat, crossing_run.alpha[-1])
    assert sc.phi_hat is not crossing_run.alpha[-1]
    assert np.all(np.isfinite(sc.phi_hat))
    assert np.allclose(sc.product, np.abs(sc.phi_hat[0] * sc.phi_hat[1]))


def test_survivor_identity_in_the_profile_limit():
    # the pair limit system at large tau: the losing component is driven to zero
    xi = np.linspace(-4, 4, 161)
    P0, Q0 = np.exp(-(xi + 1) ** 2), np.exp(-(xi - 1) ** 2)
    P, Q = two_component_profile(P0, Q0, 200.0)
    sc = type("S", (), {})()
    sc.phi_hat = np.sqrt(np.stack([P, Q]))
    ok, worst = survivor_identity(sc, P0 - Q0, frac=0.1)
    assert ok and worst < 0.2


def test_survivor_ratio_shrinks_along_the_run(crossing_run, crossing_data, grid):
    me = estimate_m(crossing_run)
    worst = []
    for t in (1e2, 1e3, 1e4):
        snap = crossing_run.alpha[crossing_run.index_of(t)]
        sc = type("S", (), {"phi_hat": snap})()
        worst.append(survivor_identity(sc, me.m_hat, frac=0.5)[1])
    assert worst[0] > worst[1] > worst[2]


# -- reconstruction ---------------------------------------------------------

def test_reconstruction_free_gaussian():
    g = Grid1D(60.0, 2048)
    free = canonicalize([], n=1)
    tr = run(free, gaussian(g.x), g, SolverConfig(t_end=2e3, per_decade=10))
    errs = []
    for t in (10.0, 100.0, 1e3, 2e3):
        i = int(np.argmin(np.abs(tr.times - t)))
        errs.append(profile_reconstruction_error(tr.state(i)).error[0])
    assert errs[2] < 1e-2
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_reconstruction_zero_field(grid):
    s = SimState(50.0, np.zeros((1, grid.M), complex), (1,), grid)
    assert profile_reconstruction_error(s).error[0] == 0.0
    with pytest.raises(ValueError):
        profile_reconstruction_error(SimState(0.5, s.alpha, (1,), grid))


def test_reconstruction_window_reported(grid):
    s = SimState(1.5, initial_alpha(gaussian(grid.x), grid), (1,), grid)
    rep = profile_reconstruction_error(s)
    lo, hi = rep.x_window
    assert lo < 0 < hi and math.isfinite(lo)
