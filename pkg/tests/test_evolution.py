import numpy as np
import pytest

import kwcflow.evolution as evolution
from kwcflow import (Forcings, Parameters, SolverError, SystemState,
                     TabulatedForcing, build_grid, compile_expression,
                     energy_inequality_residual, gamma_eps, initial_velocities,
                     prepare_initial_theta, reference_model, run,
                     step_parabolic, step_pseudo_parabolic)
from kwcflow.evolution import StepFailedError, write_timeseries
from kwcflow.grid import random_smooth_field


@pytest.fixture
def setup():
    g = build_grid(1, [48], [1.0])
    model = reference_model()
    rng = np.random.default_rng(7)
    eta0 = random_smooth_field(g, rng, mean=1.0, amplitude=0.25)
    theta0 = random_smooth_field(g, rng, mean=0.0, amplitude=0.5)
    return g, model, eta0, theta0


def stationary_forcing(grid, model, c, epsilon):
    u = model.g(c) + model.alpha_d1(c) * gamma_eps(np.zeros(1), epsilon)
    return Forcings(grid, u=float(u), v=None)


# -- forcings ------------------------------------------------------------------


def test_expression_forcing_and_safety():
    g = build_grid(1, [16], [1.0])
    f = compile_expression("sin(t) * cos(pi * x)", g)
    x = g.centers(0)
    assert np.allclose(f(0.5), np.sin(0.5) * np.cos(np.pi * x))
    f = compile_expression("2.0", g)
    assert np.all(f(0.0) == 2.0)
    for bad in ("__import__('os')", "x.such", "open('x')", "lambda: 1", "y"):
        with pytest.raises(ValueError):
            compile_expression(bad, g)


def test_forcings_accept_various_specs():
    g = build_grid(1, [16], [1.0])
    x = g.centers(0)
    f = Forcings(g, u=1.5, v="t * x")
    assert np.all(f.u(3.0) == 1.5)
    assert np.allclose(f.v(2.0), 2.0 * x)
    f = Forcings(g)
    assert np.all(f.u(1.0) == 0.0) and np.all(f.v(1.0) == 0.0)
    f = Forcings(g, u=np.ones(g.shape) * 0.3)
    assert np.all(f.u(9.9) == 0.3)
    with pytest.raises(TypeError):
        Forcings(g, u=object())


def test_tabulated_forcing_interpolates():
    g = build_grid(1, [16], [1.0])
    tab = TabulatedForcing([0.0, 1.0], [g.constant(0.0), g.constant(2.0)], g)
    assert np.allclose(tab(0.5), 1.0)
    assert np.all(tab(-1.0) == 0.0) and np.all(tab(5.0) == 2.0)
    f = Forcings(g, u=tab)
    assert np.allclose(f.u(0.25), 0.5)


# -- initial data ----------------------------------------------------------------


def test_prepare_initial_theta_constant_fixed_point(setup):
    g, model, eta0, _ = setup
    theta = prepare_initial_theta(g, eta0, g.constant(0.8), model, 0.5, 1.0)
    assert np.max(np.abs(theta - 0.8)) <= 1e-11


def test_prepare_initial_theta_converges_in_epsilon(setup):
    g, model, eta0, theta0 = setup
    eps0 = 0.1
    ref = prepare_initial_theta(g, eta0, theta0, model, eps0, 1.0)
    errs = [g.norm_v(prepare_initial_theta(g, eta0, theta0, model, e, 1.0) - ref)
            for e in (0.5, 0.3, 0.2, 0.15, 0.11)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_initial_velocities_stationary(setup):
    g, model, _, _ = setup
    params = Parameters(kappa=1.0, epsilon=0.25, T=1.0, dt=1e-3)
    state = SystemState(g, g.constant(1.3), g.constant(0.7))
    f = stationary_forcing(g, model, 1.3, params.epsilon)
    p0, z0 = initial_velocities(state, model, params, f)
    assert np.max(np.abs(p0)) <= 1e-9
    assert np.max(np.abs(z0)) <= 1e-9


def test_initial_velocities_worked_examples(setup):
    g, model, _, _ = setup
    # mu = nu = 0, constant data, forcing engineered so the eta velocity is 1
    params = Parameters(kappa=1.0, epsilon=0.25, T=1.0, dt=1e-3)
    u0 = model.g(1.0) + model.alpha_d1(1.0) * params.epsilon + 1.0
    state = SystemState(g, g.constant(1.0), g.constant(0.0))
    p0, _ = initial_velocities(state, model, params, Forcings(g, u=float(u0)))
    assert np.max(np.abs(p0 - 1.0)) <= 1e-10
    # nu > 0, constant data: theta velocity is v(0)/alpha0
    params = Parameters(kappa=1.0, epsilon=0.25, T=1.0, dt=1e-3, nu=0.2)
    _, z0 = initial_velocities(state, model, params, Forcings(g, v=2.0))
    assert np.max(np.abs(z0 - 2.0 / model.alpha0(1.0))) <= 1e-10


# -- stepping ---------------------------------------------------------------------


def test_stationary_state_preserved(setup):
    g, model, _, _ = setup
    c, tc = 1.3, 0.7
    f = stationary_forcing(g, model, c, 0.25)
    for mu, nu in ((0.0, 0.0), (0.0, 0.1), (0.1, 0.0), (0.1, 0.1)):
        params = Parameters(kappa=1.0, epsilon=0.25, T=1.0, dt=1e-3, mu=mu, nu=nu)
        s = SystemState(g, g.constant(c), g.constant(tc))
        for _ in range(20):
            s = step_pseudo_parabolic(s, model, params, f)
        assert np.max(np.abs(s.eta - c)) <= 1e-10
        assert np.max(np.abs(s.theta - tc)) <= 1e-10


def test_parabolic_requires_zero_damping(setup):
    g, model, eta0, theta0 = setup
    params = Parameters(kappa=1.0, epsilon=0.25, T=1.0, dt=1e-3, mu=0.1)
    with pytest.raises(ValueError):
        step_parabolic(SystemState(g, eta0, theta0), model, params, Forcings(g))


def test_steppers_identical_at_zero_damping(setup):
    g, model, eta0, theta0 = setup
    params = Parameters(kappa=1.0, epsilon=0.25, T=1.0, dt=1e-3)
    st = SystemState(g, eta0, theta0)
    f = Forcings(g)
    a = step_parabolic(st, model, params, f)
    b = step_pseudo_parabolic(st, model, params, f)
    assert np.array_equal(a.eta, b.eta)
    assert np.array_equal(a.theta, b.theta)


def test_eta_step_matches_explicit_euler_oracle(setup):
    # at tiny dt the implicit update differs from explicit Euler by O(dt^2)
    g, model, eta0, theta0 = setup
    f = Forcings(g)
    diffs = []
    for dt in (1e-5, 1e-6):
        params = Parameters(kappa=1.0, epsilon=0.25, T=1.0, dt=dt)
        new = step_parabolic(SystemState(g, eta0, theta0), model, params, f)
        ghat = (model.g(eta0)
                + model.alpha_d1(eta0) * gamma_eps(g.grad_cell(theta0), 0.25))
        explicit = eta0 + dt * (g.laplacian(eta0) - ghat)
        diffs.append(g.norm_h(new.eta - explicit))
    assert diffs[1] <= 2000.0 * (1e-6) ** 2
    assert 50.0 <= diffs[0] / diffs[1] <= 200.0   # O(dt^2) scaling


def test_energy_decrease_without_forcing(setup):
    g, model, eta0, theta0 = setup
    params = Parameters(kappa=1.0, epsilon=0.25, T=0.05, dt=1e-3)
    traj = run(SystemState(g, eta0, theta0), model, params, Forcings(g))
    E = traj.total_energies()
    assert np.max(np.diff(E)) <= 1e-9


def test_theta_shift_invariance(setup):
    g, model, eta0, theta0 = setup
    params = Parameters(kappa=1.0, epsilon=0.25, T=0.02, dt=1e-3)
    f = Forcings(g)
    a = run(SystemState(g, eta0, theta0), model, params, f)
    b = run(SystemState(g, eta0, theta0 + 2.0), model, params, f)
    for k in range(len(a.snapshots)):
        assert np.max(np.abs(b.theta_at(k) - 2.0 - a.theta_at(k))) <= 1e-12
        assert np.max(np.abs(b.eta_at(k) - a.eta_at(k))) <= 1e-12


# -- run and trajectory --------------------------------------------------------------


def test_run_single_step_two_snapshots(setup):
    g, model, eta0, theta0 = setup
    params = Parameters(kappa=1.0, epsilon=0.25, T=2e-3, dt=1e-3)
    traj = run(SystemState(g, eta0, theta0), model, params, Forcings(g))
    assert len(traj.snapshots) == 3
    # dt that does not divide T is rejected
    with pytest.raises(ValueError):
        run(SystemState(g, eta0, theta0), model,
            Parameters(kappa=1.0, epsilon=0.25, T=1.0, dt=3e-4), Forcings(g))


def test_run_stationary_flat_energy(setup):
    g, model, _, _ = setup
    params = Parameters(kappa=1.0, epsilon=0.25, T=0.02, dt=1e-3)
    f = stationary_forcing(g, model, 1.3, 0.25)
    traj = run(SystemState(g, g.constant(1.3), g.constant(0.7)), model, params, f)
    E = traj.total_energies()
    assert np.max(np.abs(E - E[0])) <= 1e-9
    res = energy_inequality_residual(traj, model, params, f)
    # forcing term makes the stationary residual positive; the kinetic and
    # energy-difference parts vanish
    u_term = 0.5 * params.dt * g.norm_h(f.u(0.0)) ** 2
    assert np.allclose(res, u_term, atol=1e-9)


def test_run_snapshot_stride(setup):
    g, model, eta0, theta0 = setup
    params = Parameters(kappa=1.0, epsilon=0.25, T=0.01, dt=1e-3)
    traj = run(SystemState(g, eta0, theta0), model, params, Forcings(g),
               snapshot_stride=4)
    assert traj.times == pytest.approx([0.0, 4e-3, 8e-3, 10e-3])
    assert len(traj.step_times) == 10   # rates recorded for every step
    assert all(t2 > t1 for t1, t2 in zip(traj.times, traj.times[1:]))
    assert traj.times[0] == 0.0


def test_energy_inequality_residual_nonnegative_up_to_dt(setup):
    g, model, eta0, theta0 = setup
    params = Parameters(kappa=1.0, epsilon=0.25, T=0.1, dt=1e-3)
    traj = run(SystemState(g, eta0, theta0), model, params, Forcings(g))
    res = energy_inequality_residual(traj, model, params, Forcings(g))
    assert np.min(res) >= -1e-2 * params.dt


def test_run_failure_carries_partial_trajectory(setup, monkeypatch):
    g, model, eta0, theta0 = setup
    params = Parameters(kappa=1.0, epsilon=0.25, T=0.01, dt=1e-3)
    calls = {"n": 0}
    original = evolution.singular_resolvent

    def flaky(problem, **kwargs):
        calls["n"] += 1
        if calls["n"] > 3:
            raise SolverError("synthetic failure",
                              evolution.SolveReport(0, 1.0, False))
        return original(problem, **kwargs)

    monkeypatch.setattr(evolution, "singular_resolvent", flaky)
    with pytest.raises(StepFailedError) as excinfo:
        run(SystemState(g, eta0, theta0), model, params, Forcings(g))
    traj = excinfo.value.trajectory
    assert traj is not None
    assert len(traj.snapshots) == 4   # initial + 3 completed steps


def test_write_timeseries_columns(tmp_path, setup):
    g, model, eta0, theta0 = setup
    params = Parameters(kappa=1.0, epsilon=0.25, T=0.01, dt=1e-3)
    f = Forcings(g)
    traj = run(SystemState(g, eta0, theta0), model, params, f)
    path = tmp_path / "timeseries.csv"
    write_timeseries(path, traj, model, params, f)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == ("t,E_dirichlet,E_potential,E_interfacial,E_total,"
                        "rate_eta_H,rate_theta_H,rate_eta_V,rate_theta_V,s4_residual")
    assert len(lines) == 1 + len(traj.snapshots)
