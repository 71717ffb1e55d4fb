"""Named parameter sets for the standard experiments."""

from __future__ import annotations

import math

from .core import ConfigError, RunConfig

_PRESETS = {
    "qne_front": dict(
        problem="qne", b=[0.0, 0.4, 0.5, 0.85, 1.0], x_minus=-100.0, x_plus=100.0, h=0.3,
        dt=0.3, t_end=3000.0, u0="tanh", template="initial", phase_condition="fixed",
        newton_tol=1e-10, steady_tol=1e-8, mu_star=0.07),
    "qne_2front": dict(
        problem="qne", b=[0.0, 1 / 32, 0.4, 0.73, 1.0], x_minus=-200.0, x_plus=200.0, h=0.4,
        dt=0.8, t_end=3000.0, limits=[[0.0, 0.4], [0.4, 1.0]], gamma0=[0.0, 0.0], u0_scale=5.0,
        mollifier_beta=1 / 20, coupling_mode="lagged", newton_tol=1e-10, steady_tol=1e-8),
    "qcgl_spin": dict(
        problem="qcgl", alpha_re=0.5, alpha_im=0.5, beta_re=2.5, beta_im=1.0, gamma_c_re=-1.0,
        gamma_c_im=-0.1, delta=-0.5, half_width=20.0, n_per_axis=161, initial="vortex",
        z0_scale=5.0, z0_width2=49.0, t_pre=150.0, dt_pre=0.1, dt=0.2, t_end=250.0,
        newton_tol=1e-9, steady_tol=1e-8),
    "qnwe_front": dict(
        problem="qnwe", M=0.5, A=1.0, damping=1.0, b=[0.0, 0.4, 0.5, 0.85, 1.0],
        x_minus=-50.0, x_plus=50.0, h=0.1, dt=0.2, t_end=1000.0, u0="tanh", u0_scale=2.0,
        newton_tol=1e-10, steady_tol=1e-8),
    "nls_soliton": dict(
        problem="nls", omega=1.0, mu2=0.3, n=256, x_plus=math.pi / 0.11, dt=1e-3, t_end=10.0,
        spike=False, spike_x0=-11.0, spike_amplitude=0.5, spike_width=0.2, log_stride=100),
}


def preset_names():
    return sorted(_PRESETS)


def preset(name: str) -> RunConfig:
    """Return the named parameter set as a :class:`RunConfig`."""
    try:
        flat = _PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(preset_names())}") from None
    return RunConfig.from_flat(dict(flat))
