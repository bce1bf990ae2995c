import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dnls.nonlin import canonicalize, catalog
from dnls.spectral import (Grid1D, Propagator, SimState, SimulationDiverged, SolverConfig,
                           evaluate_nonlinearity, fourier_forward, fourier_inverse, gaussian,
                           gaussian_hat, initial_alpha, rhs, run, similarity_threshold, step_rk4)

FREE = canonicalize([], n=1)


def test_grid_validation():
    with pytest.raises(ValueError, match="power of two"):
        Grid1D(10.0, 100)
    with pytest.raises(ValueError, match="positive"):
        Grid1D(-1.0, 64)
    g = Grid1D(40.0, 1024)
    assert g.xi[0] == -g.xi_max and np.isclose(g.xi[-1], g.xi_max - g.dxi)
    assert np.count_nonzero(g.xi_mask) == 2 * (1024 // 3) + 1


def test_gaussian_transform():
    g = Grid1D(40.0, 1024)
    phi = np.exp(-g.x ** 2 / 2)
    assert np.abs(fourier_forward(phi, g) - np.exp(-g.xi ** 2 / 2)).max() < 1e-12


def test_shifted_gaussian_transform_matches_closed_form():
    g = Grid1D(40.0, 1024)
    kw = dict(amplitude=0.7, center=1.5, width=1.3, shift=-0.8)
    assert np.abs(fourier_forward(gaussian(g.x, **kw), g) - gaussian_hat(g.xi, **kw)).max() < 1e-12


def test_zero_transform():
    g = Grid1D(10.0, 64)
    assert np.all(fourier_forward(np.zeros(64), g) == 0)


@settings(max_examples=25)
@given(st.integers(0, 2 ** 32 - 1))
def test_round_trip(seed):
    g = Grid1D(12.0, 256)
    rng = np.random.default_rng(seed)
    phi = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    back = fourier_inverse(fourier_forward(phi, g), g)
    assert np.abs(back - phi).max() < 1e-13 * np.abs(phi).max()


def test_plancherel():
    g = Grid1D(30.0, 512)
    phi = gaussian(g.x, width=2.0, shift=1.0)
    a = np.sum(np.abs(phi) ** 2) * g.dx
    b = np.sum(np.abs(fourier_forward(phi, g)) ** 2) * g.dxi
    assert math.isclose(a, b, rel_tol=1e-13)


def test_length_mismatch():
    with pytest.raises(ValueError, match="trailing length"):
        fourier_forward(np.zeros(10), Grid1D(1.0, 16))


# -- nonlinearity evaluation ------------------------------------------------

def test_constant_field_cubic():
    g = Grid1D(10.0, 64)
    out = evaluate_nonlinearity(catalog("kita_dissipative"), np.ones(64), g)
    assert np.allclose(out, -1j, atol=1e-14)


def test_plane_wave_weak_grad():
    g = Grid1D(np.pi * 8, 128)
    a = 3 * g.dxi
    u = np.exp(1j * a * g.x)
    out = evaluate_nonlinearity(catalog("weak_grad"), u, g)
    assert np.abs(out - (-1j * a ** 2 * u)).max() < 1e-12


def test_plane_wave_no_spurious_modes():
    g = Grid1D(np.pi * 8, 128)
    k0 = 5
    u = np.exp(1j * k0 * g.dxi * g.x)
    out = fourier_forward(evaluate_nonlinearity(catalog("cubic_conservative"), u, g), g)
    others = np.delete(np.abs(out[0]), np.argmax(np.abs(out[0])))
    assert others.max() < 1e-12


def test_vanishing_factor_two_component():
    g = Grid1D(10.0, 64)
    u = np.array([gaussian(g.x), np.zeros(64)])
    assert np.abs(evaluate_nonlinearity(catalog("two_component_lnss"), u, g)).max() == 0


# -- right-hand side --------------------------------------------------------

def test_free_rhs_vanishes():
    g = Grid1D(20.0, 256)
    alpha = initial_alpha(gaussian(g.x), g)
    for t in (0.0, 1.0, 50.0):
        assert np.all(rhs(SimState(t, alpha, (1,), g), FREE) == 0)


def test_rhs_at_zero_is_transformed_nonlinearity():
    g = Grid1D(30.0, 512)
    phi = gaussian(g.x, amplitude=0.8)
    N = catalog("kita_dissipative")
    got = rhs(SimState(0.0, initial_alpha(phi, g), (1,), g), N)[0]
    expected = -1j * (-1j) * fourier_forward(np.abs(phi) ** 2 * phi, g) * g.xi_mask
    assert np.abs(got - expected).max() < 1e-13


@settings(max_examples=15)
@given(st.floats(0, 2 * np.pi), st.sampled_from(["weak_grad", "two_component_lnss", "real_grad"]),
       st.floats(0.0, 30.0))
def test_rhs_gauge_equivariant(theta, name, t):
    g = Grid1D(30.0, 256)
    N = catalog(name)
    rng = np.random.default_rng(1)
    alpha = np.stack([gaussian_hat(g.xi, shift=s) * np.exp(1j * rng.uniform(0, 6, g.M))
                      for s in (-1, 1)[:N.n]]) * g.xi_mask
    prop = Propagator(N, g)
    rot = np.exp(1j * theta)
    a = prop.rhs(t, rot * alpha)
    b = rot * prop.rhs(t, alpha)
    assert np.abs(a - b).max() <= 1e-12 * max(1.0, np.abs(b).max())


def test_periodic_and_similarity_forms_agree():
    g = Grid1D(60.0, 2048)
    N = catalog("weak_grad")
    prop = Propagator(N, g)
    t = 3.0
    assert t > prop.t_switch
    alpha = initial_alpha(0.5 * gaussian(g.x), g)
    a = prop.rhs(t, alpha, "periodic")
    b = prop.rhs(t, alpha, "similarity")
    assert np.abs(a - b).max() < 1e-12


def test_similarity_only_when_allowed():
    g = Grid1D(60.0, 2048)
    N = canonicalize([(1, [(1, 0), (2, 0), (4, 0)], (0, -1))], n=2, masses=[1, 2])
    assert math.isinf(Propagator(N, g).t_switch)
    assert math.isinf(Propagator(catalog("weak_grad"), g, "off").t_switch)
    assert Propagator(catalog("weak_grad"), g).t_switch == similarity_threshold(g, 1.0)


# -- time stepping ----------------------------------------------------------

def test_free_evolution_exact():
    g = Grid1D(60.0, 1024)
    phi = gaussian(g.x)
    traj = run(FREE, phi, g, SolverConfig(t_end=1e3, per_decade=2))
    assert np.abs(traj.alpha - traj.alpha[0]).max() < 1e-12


def test_step_rk4_wrapper_matches_propagator():
    g = Grid1D(20.0, 256)
    N = catalog("kita_dissipative")
    s = SimState(0.5, initial_alpha(gaussian(g.x), g), (1,), g)
    s2 = step_rk4(s, 0.01, N)
    assert s2.t == 0.51
    assert np.array_equal(s2.alpha, Propagator(N, g).step_rk4(0.5, s.alpha, 0.01))


def test_fourth_order_convergence():
    g = Grid1D(20.0, 256)
    N = catalog("kita_dissipative")
    phi = gaussian(g.x)
    finals = []
    for dt in (0.2, 0.1, 0.05, 0.025):
        tr = run(N, phi, g, SolverConfig(t_end=1.0, fixed_dt=dt, per_decade=0, extra_times=()))
        finals.append(tr.alpha[-1])
    errs = [np.abs(a - b).max() for a, b in zip(finals, finals[1:])]
    slopes = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(slopes - 4) < 0.3)


def test_schedule_and_observables():
    g = Grid1D(60.0, 2048)
    cfg = SolverConfig(t_end=100.0, per_decade=4)
    times = cfg.output_times()
    assert times[0] == 0 and times[-1] == 100 and 2.0 in times
    traj = run(catalog("weak_grad"), 0.3 * gaussian(g.x), g, cfg)
    assert np.array_equal(traj.times, times)
    assert traj.alpha.shape == (len(times), 1, g.M)
    assert np.all(np.diff(traj.l2[:, 0]) <= 1e-15)
    assert traj.strip.max() < 1e-10
    assert traj.index_of(2.0) == list(times).index(2.0)
    with pytest.raises(KeyError):
        traj.index_of(3.3)


def test_run_deterministic():
    g = Grid1D(30.0, 512)
    cfg = SolverConfig(t_end=20.0, per_decade=3)
    a = run(catalog("weak_grad"), 0.4 * gaussian(g.x), g, cfg)
    b = run(catalog("weak_grad"), 0.4 * gaussian(g.x), g, cfg)
    assert np.array_equal(a.alpha, b.alpha)


def test_divergence_detected():
    # Im nu = +1 blows up in finite time at this amplitude
    g = Grid1D(10.0, 64, dealias=False)
    N = canonicalize([(1, [(1, 0), (1, 0), (2, 0)], (0, 1))], n=1)
    with pytest.raises(SimulationDiverged) as info:
        run(N, 3.0 * np.ones(64), g, SolverConfig(t_end=5.0, fixed_dt=0.01, per_decade=0))
    assert 0 < info.value.t <= 5.0


def test_component_mismatch():
    g = Grid1D(10.0, 64)
    with pytest.raises(ValueError, match="components"):
        run(catalog("two_component_lnss"), gaussian(g.x), g, SolverConfig(t_end=1.0))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(t_end=0)
    with pytest.raises(ValueError):
        SolverConfig(fixed_dt=-1)
    cfg = SolverConfig(dt0=0.01, dt_max=1.0)
    assert cfg.dt(0.5) == 0.01 and cfg.dt(10.0) == 0.1 and cfg.dt(1e5) == 1.0
