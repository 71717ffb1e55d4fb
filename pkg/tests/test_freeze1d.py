import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import QNE_ROOTS
from freezewave.core import ConfigError, Field, Grid1D, RunConfig
from freezewave.freeze1d import (Freeze1D, Problem1D, TemplateProfile, cubic_nagumo_f,
                                 direct_simulate, initial_profile, integrate, pdae_residual,
                                 problem_from_config, quintic_nagumo_f, run_freeze, solve_steady)
from freezewave.liegroup import SEAlgebraElement, exp_se, group_action

NAGUMO_SPEED = 0.3535533905932737622  # sqrt(2) (1/2 - a), a = 1/4


def test_quintic_reaction_roots_and_slopes():
    f = quintic_nagumo_f(QNE_ROOTS)
    assert np.allclose(f(np.array(QNE_ROOTS)), 0.0)
    assert np.isclose(f.derivative(np.array([0.0]))[0], -0.17)
    assert np.isclose(f.derivative(np.array([1.0]))[0], -0.045)
    # f = -prod(u - b_i): positive just above the lowest root
    assert f(np.array([-0.1]))[0] > 0


@given(u=st.floats(-1, 2), a=st.floats(0.05, 0.45))
def test_cubic_reaction_derivative(u, a):
    f = cubic_nagumo_f(a)
    eps = 1e-6
    fd = (f(np.array([u + eps])) - f(np.array([u - eps])))[0] / (2 * eps)
    assert abs(fd - f.derivative(np.array([u]))[0]) < 1e-6


def test_mixed_type_rejected():
    with pytest.raises(ValueError):
        Problem1D(1, [[1.0]], E=[[1.0]])
    with pytest.raises(ValueError):
        Problem1D(2, np.zeros((2, 2)), E=[[0.0, -1.0], [1.0, 0.0]])


def test_nagumo_front_speed():
    prob = Problem1D.scalar_reaction(cubic_nagumo_f(0.25))
    g = Grid1D.from_spacing(-40.0, 40.0, 0.1)
    guess = Field(g, 0.5 * (1 - np.tanh(g.nodes())))
    v, mu, res = solve_steady(prob, guess, 0.3, TemplateProfile.from_field(guess))
    assert res < 1e-10
    assert abs(mu - NAGUMO_SPEED) < 1e-3


def test_qne_steady_speed(qne_front_100):
    _, v, mu = qne_front_100
    assert abs(mu - 0.0710) < 5e-4
    assert v.values[0, 0] < 1e-6 and abs(v.values[-1, 0] - 1) < 1e-6


def test_freeze_converges_to_steady_solution():
    cfg = RunConfig.from_flat(dict(problem="nagumo3", a=0.25, u0="tanh_down", x_minus=-40,
                                   x_plus=40, h=0.2, dt=0.2, t_end=200))
    ts, st = run_freeze(cfg)
    assert abs(st.mu - NAGUMO_SPEED) < 2e-3
    assert abs(st.phase_residual) < 1e-9
    assert np.all(np.diff(ts.column("t")) > 0)


def test_residual_vanishes_at_solution():
    cfg = RunConfig.from_flat(dict(problem="nagumo3", a=0.25, u0="tanh_down", x_minus=-20,
                                   x_plus=20, h=0.2, dt=0.5, t_end=3, stop_when_steady=False))
    prob, g = problem_from_config(cfg), cfg.grid1d()
    u0 = initial_profile(cfg, g)
    tmpl = TemplateProfile.from_field(u0)
    solver = Freeze1D(prob, g, tmpl, newton_tol=1e-12)
    hist = [solver.initial_state(u0)]
    hist.append(solver.step(hist, 0.5))
    hist.append(solver.step(hist, 0.5))
    r1 = pdae_residual(hist[1], hist[:1], 0.5, prob, tmpl)
    r2 = pdae_residual(hist[2], hist[:2], 0.5, prob, tmpl)
    assert np.max(np.abs(r1)) < 1e-11 and np.max(np.abs(r2)) < 1e-11


def test_heat_trapezoid_mass_conserved():
    cfg = RunConfig.from_flat(dict(problem="heat", x_minus=-10, x_plus=10, h=0.2, dt=0.1,
                                   t_end=5, u0="zero"))
    g = cfg.grid1d()
    x = g.nodes()
    u0 = Field(g, np.exp(-x**2))
    solver = Freeze1D(problem_from_config(cfg), g, mu_fixed=0.0)
    states = []
    integrate(solver, u0, 0.1, 5, stop_when_steady=False, callback=states.append)
    w = g.weights()
    m0 = w @ u0.values[:, 0]
    assert max(abs(w @ s.v.values[:, 0] - m0) for s in states) < 1e-12


def test_degenerate_template_freezes_mu():
    g = Grid1D(-5, 5, 51)
    flat = Field(g, np.ones(51))
    with pytest.warns(UserWarning, match="translational"):
        solver = Freeze1D(Problem1D.scalar_reaction(None), g, TemplateProfile.from_field(flat))
    assert solver.mu_fixed == 0.0


def test_transport_speed_is_recovered():
    cfg = RunConfig.from_flat(dict(problem="transport", speed=0.5, x_minus=-30, x_plus=30,
                                   h=0.1, dt=0.1, t_end=5, u0="tanh"))
    ts, st = run_freeze(cfg)
    assert abs(st.mu + 0.5) < 1e-9


def test_cfl_warning_for_large_steps():
    # with mu held at zero the characteristic speed stays at 2, so dt = 0.5 gives CFL 10
    g = Grid1D.from_spacing(-10.0, 10.0, 0.1)
    solver = Freeze1D(Problem1D(1, [[0.0]], E=[[2.0]]), g, mu_fixed=0.0)
    u0 = Field(g, 0.5 * (np.tanh(g.nodes()) + 1))
    with pytest.warns(UserWarning, match="CFL"):
        integrate(solver, u0, 0.5, 1.0, stop_when_steady=False)


def test_reconstruction_matches_direct_simulation():
    cfg = RunConfig.from_flat(dict(problem="nagumo3", a=0.25, u0="tanh_down", x_minus=-40,
                                   x_plus=40, h=0.2, dt=0.2, t_end=20))
    prob, g = problem_from_config(cfg), cfg.grid1d()
    u0 = initial_profile(cfg, g)
    states = []
    integrate(Freeze1D(prob, g, TemplateProfile.from_field(u0)), u0, 0.2, 20,
              stop_when_steady=False, callback=states.append)
    tr = direct_simulate(prob, u0, 0.2, 20)
    err = 0.0
    for k, s in enumerate(states):
        rec = group_action(exp_se(SEAlgebraElement.translation([s.gamma])), s.v).values
        err = max(err, np.linalg.norm(rec - tr.values[k + 1]) / np.linalg.norm(tr.values[k + 1]))
    assert err < 1e-2


def test_unknown_problem_and_profile():
    with pytest.raises(ConfigError):
        problem_from_config(RunConfig.from_flat(dict(problem="unknown")))
    cfg = RunConfig.from_flat(dict(problem="qne", u0="spiral", x_minus=0, x_plus=1, n=5))
    with pytest.raises(ConfigError):
        initial_profile(cfg, cfg.grid1d())
