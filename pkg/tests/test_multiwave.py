import numpy as np
import pytest
from hypothesis import given, strategies as st

from freezewave.core import ConfigError, Field, Grid1D, RunConfig
from freezewave.freeze1d import Problem1D, direct_simulate, quintic_nagumo_f
from freezewave.multiwave import (Mollifier, build_multiwave, multiwave_residual, nonlocal_shift,
                                  partition_unity, run_multiwave, shift_matrix)

Q1_AT_MINUS_50 = 0.986703886658419690  # phi = sech(x/20), gammas = (-50, 50)


def _cfg(**kw):
    base = dict(problem="qne", b=[0.0, 1 / 32, 0.4, 0.73, 1.0], x_minus=-200, x_plus=200,
                h=0.4, dt=0.8, t_end=40.0, limits=[[0.0, 0.4], [0.4, 1.0]], gamma0=[0.0, 0.0],
                newton_tol=1e-10, stop_when_steady=False)
    base.update(kw)
    return RunConfig.from_flat(base)


@given(gammas=st.lists(st.floats(-300, 300), min_size=1, max_size=5),
       beta=st.floats(0.01, 2.0))
def test_partition_of_unity(gammas, beta):
    x = np.linspace(-400, 400, 101)
    Q = partition_unity(gammas, x, Mollifier(beta))
    assert np.all(Q > 0)
    assert np.max(np.abs(Q.sum(axis=0) - 1.0)) < 1e-14


def test_partition_value():
    Q = partition_unity([-50.0, 50.0], np.array([-50.0]), Mollifier(1 / 20))
    assert abs(Q[0, 0] - Q1_AT_MINUS_50) < 1e-15


def test_mollifier_validation_and_tails():
    with pytest.raises(ValueError):
        Mollifier(0.0)
    assert Mollifier(1.0)(1e6) > 0


def test_nonlocal_shift():
    g = Grid1D(0.0, 10.0, 11)
    v = Field(g, g.nodes() ** 2)
    s = nonlocal_shift(v, 2.0, (-1.0, 99.0)).values[:, 0]
    assert np.array_equal(s[2:], (g.nodes()[2:] - 2.0) ** 2)
    assert np.all(s[:2] == -1.0)
    s = nonlocal_shift(v, -0.5, (-1.0, 99.0)).values[:, 0]
    assert s[-1] == 99.0 and np.isclose(s[0], 0.5)  # linear interpolation of x^2 at 0.5
    assert np.array_equal(nonlocal_shift(v, 0.0, (0, 0)).values, v.values)
    with pytest.raises(ValueError):
        nonlocal_shift(v, np.inf, (0, 0))


@given(delta=st.floats(-12, 12))
def test_shift_matrix_matches_interior(delta):
    g = Grid1D(0.0, 10.0, 21)
    v = Field(g, np.sin(g.nodes()))
    P = shift_matrix(g, delta)
    full = nonlocal_shift(v, delta, (0.0, 0.0)).values[:, 0]
    assert np.allclose(P @ v.values[:, 0], full)


@pytest.fixture(scope="module")
def two_waves():
    prob, profiles, gam0 = build_multiwave(_cfg(x_minus=-60, x_plus=60))
    return prob, profiles


def test_offsets_and_limits(two_waves):
    prob, _ = two_waves
    assert np.allclose(prob.offsets[:, 0], [0.0, 0.4])
    assert np.allclose(prob.profile_limits[:, :, 0], [[0.0, 0.4], [0.0, 0.6]])


def test_coupling_redistributes_the_defect(two_waves):
    prob, profiles = two_waves
    h = prob.grid.h
    gam = np.array([-20 * h, 25 * h])  # grid-aligned, so shifts are exact
    vs = [p.values for p in profiles]
    C = prob.coupling(vs, gam)
    # back to the physical frame: sum_j C_j(x - gamma_j)
    total = sum(nonlocal_shift(Field(prob.grid, C[j]), gam[j], (0.0, 0.0)).values
                for j in range(2))
    phys = [nonlocal_shift(Field(prob.grid, vs[j]), gam[j], tuple(prob.profile_limits[j])).values
            for j in range(2)]
    defect = prob.f(phys[0] + phys[1]) - prob.f(phys[0]) - prob.f(phys[1] + 0.4)
    inner = slice(60, -60)
    assert np.max(np.abs(total[inner] - defect[inner])) < 1e-14


def test_coupling_jacobian(two_waves):
    prob, profiles = two_waves
    gam = np.array([-3.1, 4.7])
    vs = [p.values.copy() for p in profiles]
    blocks = prob.coupling_jacobian(vs, gam)
    rng = np.random.default_rng(0)
    eps = 1e-6
    for k in range(2):
        d = rng.standard_normal(vs[k].shape)
        plus = [v.copy() for v in vs]
        minus = [v.copy() for v in vs]
        plus[k] += eps * d
        minus[k] -= eps * d
        Cp, Cm = prob.coupling(plus, gam), prob.coupling(minus, gam)
        for j in range(2):
            fd = ((Cp[j] - Cm[j]) / (2 * eps)).ravel()
            assert np.allclose(blocks[j][k] @ d.ravel(), fd, atol=1e-7)


def test_superposition_tracks_direct_simulation():
    cfg = _cfg()
    ser, st, prob = run_multiwave(cfg)
    u = prob.superpose(st).values[:, 0]
    _, profiles, _ = build_multiwave(cfg)
    u0 = Field(prob.grid, profiles[0].values + nonlocal_shift(
        profiles[1], 0.0, (0.0, 0.6)).values)
    direct = direct_simulate(Problem1D.scalar_reaction(quintic_nagumo_f(cfg.get("b"))), u0,
                             cfg.dt, cfg.t_end).values[-1, :, 0]
    inner = np.abs(prob.grid.nodes()) < 150
    assert np.max(np.abs(u - direct)[inner]) < 2e-3


def test_lagged_and_coupled_modes_agree():
    _, a, _ = run_multiwave(_cfg(t_end=8.0))
    _, b, _ = run_multiwave(_cfg(t_end=8.0, coupling_mode="coupled"))
    assert np.max(np.abs(a.mus - b.mus)) < 1e-7
    assert np.max(np.abs(a.profiles[1].values - b.profiles[1].values)) < 1e-7


def test_multiwave_residual_vanishes_after_step():
    prob, profiles, gam0 = build_multiwave(_cfg(x_minus=-60, x_plus=60))
    s0 = prob.initial_state(profiles, gam0)
    s1 = prob.step([s0], 0.8)
    res = multiwave_residual(s1, [s0], 0.8, prob)
    assert max(max(np.max(np.abs(R)), abs(p)) for R, p in res) < 1e-9


def test_config_validation():
    with pytest.raises(ConfigError):
        build_multiwave(_cfg(limits=[[0.0, 0.4], [0.5, 1.0]]))
    with pytest.raises(ConfigError):
        build_multiwave(_cfg(problem="heat"))
    with pytest.raises(ValueError):
        build_multiwave(_cfg(coupling_mode="implicit"))
