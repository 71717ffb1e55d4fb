"""Freezing the cubic NLS ``i u_t = -u_xx - |u|^2 u`` under gauge and translation.

Frozen equation (gauge rate ``mu1``, translation rate ``mu2``)::

    i v_t = -v_xx - |v|^2 v + mu1 v + i mu2 v_x

with the solitons ``v(x) = w sqrt(2) exp(i mu2 x / 2) / cosh(w x)``,
``mu1 = w^2 + mu2^2 / 4`` as steady states. The reconstruction is
``u(x, t) = exp(i gamma1) v(x - gamma2, t)``. Time stepping is Strang
split-step Fourier; ``(mu1, mu2)`` come from the time-differentiated phase
conditions and are refreshed before every step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Field, Grid1D, RunConfig, TimeSeries
from .discretize import wavenumbers


@dataclass
class NLSState:
    v: Field
    mu1: float
    mu2: float
    gamma1: float
    gamma2: float
    t: float
    phase_residual: float = 0.0
    degenerate: bool = False


def nls_grid(half_length: float = np.pi / 0.11, n: int = 256) -> Grid1D:
    return Grid1D(-half_length, half_length, n, periodic=True)


def soliton(grid: Grid1D, omega: float, mu2: float):
    """Soliton profile and its gauge rate ``mu1 = omega^2 + mu2^2/4``."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    x = grid.nodes()
    v = omega * np.sqrt(2.0) * np.exp(0.5j * mu2 * x) / np.cosh(omega * x)
    return Field(grid, v.astype(complex)), omega**2 + 0.25 * mu2**2


def pairing(grid: Grid1D, u: np.ndarray, v: np.ndarray) -> float:
    """Real pairing ``Re sum conj(u) v h``."""
    return float(np.real(np.sum(np.conj(u) * v)) * grid.h)


class FrozenNLS:
    """Split-step integrator for the frozen NLS on a periodic grid.

    ``cubic=False`` drops the nonlinearity; ``frozen=False`` holds
    ``mu = 0`` and integrates the original equation.
    """

    def __init__(self, grid: Grid1D, template: Optional[Field] = None, cubic: bool = True,
                 frozen: bool = True, project_every: int = 0, singular_tol: float = 1e-12):
        if not grid.periodic:
            raise ValueError("the split-step solver needs a periodic grid")
        self.grid = grid
        self.k = wavenumbers(grid)
        self.cubic = cubic
        self.frozen = frozen
        self.project_every = project_every
        self.singular_tol = singular_tol
        if template is not None:
            self.vh = template.values[:, 0].astype(complex)
            self.vh_x = self.deriv(self.vh, 1)
        else:
            self.vh = self.vh_x = None
        self._steps = 0

    def deriv(self, v: np.ndarray, order: int) -> np.ndarray:
        symbol = (1j * self.k) ** order
        if order % 2 == 1:
            symbol[self.grid.n // 2] = 0.0
        return np.fft.ifft(symbol * np.fft.fft(v))

    def frozen_rhs_parts(self, v: np.ndarray):
        """``v_t = N(v) - i mu1 v + mu2 v_x``: returns ``(N, -i v, v_x)``."""
        vxx = self.deriv(v, 2)
        N = 1j * vxx + (1j * np.abs(v) ** 2 * v if self.cubic else 0.0)
        return N, -1j * v, self.deriv(v, 1)

    def mu_from_phase(self, v: np.ndarray):
        """Solve the 2x2 system from differentiated phase conditions.

        Returns ``(mu1, mu2, degenerate)``.
        """
        if not self.frozen:
            return 0.0, 0.0, False
        g = self.grid
        N, Gv, vx = self.frozen_rhs_parts(v)
        a = [1j * self.vh, self.vh_x]
        mat = np.array([[pairing(g, a[r], Gv), pairing(g, a[r], vx)] for r in range(2)])
        rhs = -np.array([pairing(g, a[r], N) for r in range(2)])
        scale = max(1.0, float(np.max(np.abs(mat))))
        sv = np.linalg.svd(mat, compute_uv=False)
        if sv[-1] <= self.singular_tol * scale * max(1.0, pairing(g, self.vh, self.vh)):
            return 0.0, 0.0, True
        mu1, mu2 = np.linalg.solve(mat, rhs)
        return float(mu1), float(mu2), False

    def phase_residual(self, v: np.ndarray) -> float:
        if self.vh is None:
            return 0.0
        g = self.grid
        return abs(pairing(g, 1j * self.vh, v)) + abs(pairing(g, self.vh_x, v - self.vh))

    def _nonlinear(self, v: np.ndarray, tau: float) -> np.ndarray:
        if not self.cubic:
            return v
        return v * np.exp(1j * tau * np.abs(v) ** 2)

    def _linear(self, v: np.ndarray, mu1: float, mu2: float, tau: float) -> np.ndarray:
        symbol = np.exp(1j * tau * (-self.k ** 2 - mu1 + mu2 * self.k))
        return np.fft.ifft(symbol * np.fft.fft(v))

    def project(self, v: np.ndarray, iters: int = 8) -> np.ndarray:
        """Move ``v`` along its group orbit until both phase conditions hold."""
        alpha = shift = 0.0
        g = self.grid
        base = np.fft.fft(v)
        for _ in range(iters):
            w = np.exp(1j * alpha) * np.fft.ifft(np.exp(-1j * self.k * shift) * base)
            r = np.array([pairing(g, 1j * self.vh, w), pairing(g, self.vh_x, w - self.vh)])
            if np.max(np.abs(r)) < 1e-14:
                break
            wa, ws = 1j * w, -self.deriv(w, 1)
            J = np.array([[pairing(g, 1j * self.vh, wa), pairing(g, 1j * self.vh, ws)],
                          [pairing(g, self.vh_x, wa), pairing(g, self.vh_x, ws)]])
            da, ds = np.linalg.solve(J, -r)
            alpha += da
            shift += ds
        return w

    def initial_state(self, u0: Field) -> NLSState:
        v = u0.values[:, 0].astype(complex)
        mu1, mu2, deg = self.mu_from_phase(v)
        return NLSState(Field(self.grid, v), mu1, mu2, 0.0, 0.0, 0.0,
                        self.phase_residual(v), deg)

    def step(self, state: NLSState, dt: float) -> NLSState:
        v = state.v.values[:, 0]
        mu1, mu2, deg = self.mu_from_phase(v)
        v = self._nonlinear(v, 0.5 * dt)
        v = self._linear(v, mu1, mu2, dt)
        v = self._nonlinear(v, 0.5 * dt)
        self._steps += 1
        if self.project_every and self.frozen and self._steps % self.project_every == 0:
            v = self.project(v)
        mu1_new, mu2_new, deg_new = self.mu_from_phase(v)
        g1 = state.gamma1 + 0.5 * dt * (state.mu1 + mu1_new)
        g2 = state.gamma2 + 0.5 * dt * (state.mu2 + mu2_new)
        return NLSState(Field(self.grid, v), mu1_new, mu2_new, float(np.mod(g1, 2 * np.pi)),
                        g2, state.t + dt, self.phase_residual(v), deg or deg_new)

    def mass(self, state: NLSState) -> float:
        v = state.v.values[:, 0]
        return float(np.sum(np.abs(v) ** 2) * self.grid.h)


def spike(grid: Grid1D, x0: float = -11.0, amplitude: float = 0.5, width: float = 0.2) -> np.ndarray:
    """Gaussian bump ``amplitude * exp(-(x - x0)^2 / (2 width^2))``."""
    x = grid.nodes()
    return amplitude * np.exp(-0.5 * ((x - x0) / width) ** 2)


def splitstep_frozen_step(solver: FrozenNLS, state: NLSState, dt: float) -> NLSState:
    return solver.step(state, dt)


def run_nls_freeze(cfg: RunConfig, callback=None):
    """Run from config keys ``omega``, ``mu2``, ``n``, ``spike``, ``spike_x0``,
    ``spike_amplitude``, ``spike_width``, ``frozen``, ``cubic``, ``project_every``.

    The template is the unperturbed soliton. Returns ``(TimeSeries, state)``
    with extra columns ``gamma_1, gamma_2, mass, peak_index``.
    """
    half = float(cfg.grid.get("x_plus", np.pi / 0.11))
    grid = nls_grid(half, int(cfg.grid.get("n", 256)))
    omega = float(cfg.get("omega", 1.0))
    mu2 = float(cfg.get("mu2", 0.3))
    v_sol, _ = soliton(grid, omega, mu2)
    u0 = v_sol.values[:, 0].copy()
    if cfg.get("initial", "soliton") == "zero":
        u0 = np.zeros_like(u0)
    if cfg.get("spike", False):
        u0 = u0 + spike(grid, float(cfg.get("spike_x0", -11.0)),
                        float(cfg.get("spike_amplitude", 0.5)), float(cfg.get("spike_width", 0.2)))
    solver = FrozenNLS(grid, v_sol, cubic=bool(cfg.get("cubic", True)),
                       frozen=bool(cfg.get("frozen", True)),
                       project_every=int(cfg.get("project_every", 0)))
    state = solver.initial_state(Field(grid, u0))
    if state.degenerate:
        warnings.warn("phase matrix is singular: (mu1, mu2) reported as degenerate zeros")
    ts = TimeSeries(("mu_1", "mu_2"), ("gamma_1", "gamma_2", "mass", "peak_index"))

    def log_row(s):
        v = s.v.values[:, 0]
        ts.append(s.t, [s.mu1, s.mu2], s.phase_residual, 0, s.gamma1, s.gamma2,
                  solver.mass(s), float(np.argmax(np.abs(v))))

    log_row(state)
    stride = int(cfg.get("log_stride", 1))
    for k in range(1, int(round(cfg.t_end / cfg.dt)) + 1):
        state = solver.step(state, cfg.dt)
        if callback is not None:
            callback(state)
        if k % stride == 0:
            log_row(state)
    return ts, state
