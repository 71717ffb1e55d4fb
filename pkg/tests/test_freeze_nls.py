import numpy as np
import pytest

from freezewave.core import RunConfig
from freezewave.freeze_nls import FrozenNLS, nls_grid, pairing, run_nls_freeze, soliton, spike


def test_soliton_is_steady_in_frozen_frame():
    g = nls_grid()
    v, mu1 = soliton(g, 1.0, 0.3)
    solver = FrozenNLS(g, v)
    st = solver.initial_state(v)
    assert abs(st.mu1 - mu1) < 1e-8 and abs(st.mu2 - 0.3) < 1e-8
    for _ in range(200):
        st = solver.step(st, 1e-3)
    err = np.sqrt(g.h) * np.linalg.norm(st.v.values - v.values)
    assert err < 1e-6
    assert abs(st.gamma2 - 0.3 * 0.2) < 1e-8


def test_mass_conserved_with_perturbation():
    cfg = RunConfig.from_flat(dict(problem="nls", dt=1e-3, t_end=1.0, spike=True, log_stride=50))
    ts, _ = run_nls_freeze(cfg)
    m = ts.column("mass")
    assert np.max(np.abs(m - m[0])) / m[0] < 1e-12


def test_zero_initial_data_is_degenerate():
    cfg = RunConfig.from_flat(dict(problem="nls", dt=1e-3, t_end=0.01, initial="zero"))
    with pytest.warns(UserWarning, match="singular"):
        ts, st = run_nls_freeze(cfg)
    assert st.degenerate and st.mu1 == 0.0 and st.mu2 == 0.0


def test_unfrozen_soliton_travels():
    g = nls_grid()
    v, mu1 = soliton(g, 1.0, 0.3)
    solver = FrozenNLS(g, v, frozen=False)
    st = solver.initial_state(v)
    for _ in range(1000):
        st = solver.step(st, 1e-3)
    peak = g.nodes()[np.argmax(np.abs(st.v.values[:, 0]))]
    assert abs(peak - 0.3) < g.h


def test_projection_restores_phase_conditions():
    g = nls_grid()
    v, _ = soliton(g, 1.0, 0.3)
    solver = FrozenNLS(g, v)
    moved = np.exp(0.2j) * np.roll(v.values[:, 0], 3)
    w = solver.project(moved)
    assert solver.phase_residual(w) < 1e-10
    assert np.allclose(w, v.values[:, 0], atol=1e-8)


def test_pairing_and_spike():
    g = nls_grid()
    a = np.ones(g.n, dtype=complex)
    assert np.isclose(pairing(g, a, 1j * a), 0.0)
    assert np.isclose(pairing(g, a, a), g.h * g.n)
    s = spike(g)
    assert s.max() <= 0.5 and abs(g.nodes()[np.argmax(s)] + 11.0) <= g.h
    with pytest.raises(ValueError):
        soliton(g, 0.0, 0.3)
