"""Freezing for second-order wave equations ``M u_tt = A u_xx + f(u, u_x, u_t)``.

The frozen system is integrated in companion form with ``w = v_t``::

    v_t   = w
    M w_t = (A - mu1^2 M) v_xx + 2 mu1 M w_x + mu2 M v_x + f(v, v_x, w - mu1 v_x)
    0     = <v_hat_x, v - v_hat>
    mu1_t = mu2,   gamma_t = mu1

``mu2`` is the algebraic unknown of the Newton step; ``mu1`` follows from
it by the trapezoid rule, so it stays continuous across steps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .core import ConfigError, Field, Grid1D, RunConfig, TimeSeries
from .discretize import BandedMatrix, DiffOp1D, SingularMatrixError, assemble_banded_jacobian, bordered_solve
from .freeze1d import (DegenerateTemplateError, Problem1D, StepFailure, TemplateProfile,
                       quintic_nagumo_f)


def _zero3(u, ux, ut):
    return np.zeros_like(u)


def _zero3_jac(u, ux, ut):
    n, m = u.shape
    return np.zeros((n, m, m))


@dataclass
class WaveProblem:
    """``M u_tt = A u_xx + f(u, u_x, u_t)``; Jacobian callbacks return ``(n, m, m)``."""

    m: int
    M: np.ndarray
    A: np.ndarray
    f: Callable = _zero3
    d1f: Callable = _zero3_jac
    d2f: Callable = _zero3_jac
    d3f: Callable = _zero3_jac
    name: str = ""

    def __post_init__(self):
        self.M = np.atleast_2d(np.asarray(self.M, dtype=float))
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if self.M.shape != (self.m, self.m) or self.A.shape != (self.m, self.m):
            raise ValueError("M and A must be m x m")
        if abs(np.linalg.det(self.M)) < 1e-14:
            raise ValueError("M must be invertible")
        self.Minv = np.linalg.inv(self.M)
        lam, R = np.linalg.eig(self.Minv @ self.A)
        if np.any(np.abs(lam.imag) > 1e-12) or np.any(lam.real <= 0):
            raise ValueError("M^{-1} A must have positive real eigenvalues")
        R = R.real
        if np.linalg.cond(R) > 1e10:
            raise ValueError("M^{-1} A is not diagonalizable")
        self._sqrt = R @ np.diag(np.sqrt(lam.real)) @ np.linalg.inv(R)

    @property
    def N(self) -> np.ndarray:
        """Positive square root of ``M^{-1} A``."""
        return self._sqrt

    @classmethod
    def scalar(cls, reaction, M: float = 1.0, A: float = 1.0, damping: float = 0.0,
               name: str = "") -> "WaveProblem":
        """``M u_tt = A u_xx + f(u) - damping * u_t``."""
        def f(u, ux, ut):
            out = -damping * ut
            return out + reaction(u) if reaction is not None else out

        def d1f(u, ux, ut):
            if reaction is None:
                return np.zeros(u.shape + (1,))
            return reaction.derivative(u)[:, :, None]

        def d3f(u, ux, ut):
            return np.full(u.shape + (1,), -damping)

        return cls(1, [[M]], [[A]], f=f, d1f=d1f, d3f=d3f, name=name)


@dataclass
class WaveFreezeState:
    v: Field
    w: Field
    mu1: float
    mu2: float
    gamma: float
    t: float
    phase_residual: float = 0.0
    newton_iters: int = 0
    sonic: bool = False


def _ip(grid: Grid1D, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(grid.weights()[:, None] * a * b))


def _denominator(u0: Field, template: TemplateProfile) -> float:
    d1 = DiffOp1D("first_central", u0.grid)
    den = _ip(u0.grid, d1.apply_array(u0.values), template.v_hat_xi.values)
    if abs(den) < 1e-14:
        raise DegenerateTemplateError("<u0_x, v_hat_x> vanishes")
    return den


def consistency_mu1(u0: Field, v0: Field, template: TemplateProfile) -> float:
    """Initial ``mu1`` keeping the phase condition stationary at ``t = 0``."""
    den = _denominator(u0, template)
    return -_ip(u0.grid, v0.values, template.v_hat_xi.values) / den


def consistency_mu2(u0: Field, v0: Field, mu1: float, problem: WaveProblem,
                    template: TemplateProfile) -> float:
    """Initial ``mu2`` making the second time derivative of the phase vanish."""
    den = _denominator(u0, template)
    grid = u0.grid
    d1 = DiffOp1D("first_central", grid)
    d2 = DiffOp1D("second_central", grid)
    u, ut = u0.values, v0.values
    ux, uxx, utx = d1.apply_array(u), d2.apply_array(u), d1.apply_array(ut)
    lin = uxx @ (problem.Minv @ problem.A).T + mu1**2 * uxx + 2.0 * mu1 * utx
    acc = lin + problem.f(u, ux, ut) @ problem.Minv.T
    return -_ip(grid, acc, template.v_hat_xi.values) / den


class WaveFreeze1D:
    """BDF/Newton integrator for the frozen wave system in ``(v, w)``.

    ``mu_fixed`` switches off the phase row and holds ``mu1 = mu_fixed``,
    ``mu2 = 0`` (the unfrozen equation when ``mu_fixed = 0``).
    """

    def __init__(self, problem: WaveProblem, grid: Grid1D,
                 template: Optional[TemplateProfile] = None, newton_tol: float = 1e-10,
                 max_iters: int = 25, mu_fixed: Optional[float] = None,
                 sonic_tol: float = 1e-3):
        self.problem, self.grid = problem, grid
        self.n, self.m = grid.n, problem.m
        self.template = template
        self.mu_fixed = mu_fixed
        self.newton_tol, self.max_iters = newton_tol, max_iters
        self.sonic_tol = sonic_tol
        self.w_q = grid.weights()
        self.d1 = DiffOp1D("first_central", grid)
        self.d2 = DiffOp1D("second_central", grid)
        if mu_fixed is None and (template is None or template.degenerate):
            raise DegenerateTemplateError("fixed phase condition needs a nondegenerate template")

    def _split(self, z: np.ndarray):
        return z[:, :self.m], z[:, self.m:]

    def rhs(self, v, w, mu1, mu2):
        """Right-hand side of ``M w_t`` (the ``w`` equation before inverting M)."""
        p = self.problem
        vx, vxx, wx = self.d1.apply_array(v), self.d2.apply_array(v), self.d1.apply_array(w)
        lin = (vxx @ (p.A - mu1**2 * p.M).T + 2.0 * mu1 * wx @ p.M.T + mu2 * vx @ p.M.T)
        return lin + p.f(v, vx, w - mu1 * vx)

    def residual(self, v, w, mu1, mu2, history, dt):
        alpha, hv, hw = self._bdf(history)
        R1 = (alpha * v - hv) / dt - w
        R2 = (alpha * w - hw) @ self.problem.M.T / dt - self.rhs(v, w, mu1, mu2)
        psi = 0.0 if self.mu_fixed is not None else _ip(
            self.grid, self.template.v_hat_xi.values, v - self.template.v_hat.values)
        return R1, R2, psi

    @staticmethod
    def _bdf(history):
        if len(history) >= 2:
            a, b = history[-1], history[-2]
            return 1.5, 2.0 * a.v.values - 0.5 * b.v.values, 2.0 * a.w.values - 0.5 * b.w.values
        return 1.0, history[-1].v.values, history[-1].w.values

    def jacobian(self, v, w, mu1, mu2, alpha, dt) -> BandedMatrix:
        p, m, n = self.problem, self.m, self.n
        vx = self.d1.apply_array(v)
        ut = w - mu1 * vx
        J1, J2, J3 = p.d1f(v, vx, ut), p.d2f(v, vx, ut), p.d3f(v, vx, ut)

        def block(ij, blk):
            out = np.zeros(blk.shape[:-2] + (2 * m, 2 * m)) if blk.ndim == 3 else np.zeros((2 * m, 2 * m))
            i, j = ij
            out[..., i * m:(i + 1) * m, j * m:(j + 1) * m] = blk
            return out

        eye = np.eye(m)
        terms = [
            (None, block((0, 0), alpha / dt * eye)),
            (None, block((0, 1), -eye)),
            (None, block((1, 1), alpha / dt * p.M)),
            (self.d2, block((1, 0), -(p.A - mu1**2 * p.M))),
            (self.d1, block((1, 0), -mu2 * p.M)),
            (None, block((1, 0), -J1)),
            (self.d1, block((1, 0), -J2 + mu1 * J3)),
            (self.d1, block((1, 1), -2.0 * mu1 * p.M)),
            (None, block((1, 1), -J3)),
        ]
        return assemble_banded_jacobian(terms, n, 2 * m)

    def dR_dmu(self, v, w, mu1, mu2, dt):
        """Derivative of the stacked residual with respect to ``mu2``."""
        p = self.problem
        vx, vxx, wx = self.d1.apply_array(v), self.d2.apply_array(v), self.d1.apply_array(w)
        J3 = p.d3f(v, vx, w - mu1 * vx)
        d_mu1 = -(-2.0 * mu1 * vxx @ p.M.T + 2.0 * wx @ p.M.T - np.einsum("nij,nj->ni", J3, vx))
        d_mu2 = -vx @ p.M.T
        R2 = d_mu2 + 0.5 * dt * d_mu1
        return np.hstack([np.zeros_like(v), R2])

    def initial_state(self, u0: Field, v0: Field) -> WaveFreezeState:
        if self.mu_fixed is not None:
            mu1, mu2 = float(self.mu_fixed), 0.0
        else:
            mu1 = consistency_mu1(u0, v0, self.template)
            mu2 = consistency_mu2(u0, v0, mu1, self.problem, self.template)
        vx = self.d1.apply_array(u0.values)
        w = v0.values + mu1 * vx
        psi = 0.0 if self.mu_fixed is not None else _ip(
            self.grid, self.template.v_hat_xi.values, u0.values - self.template.v_hat.values)
        return WaveFreezeState(u0.copy(), Field(self.grid, w), mu1, mu2, 0.0, 0.0, psi)

    def step(self, history, dt: float) -> WaveFreezeState:
        last = history[-1]
        alpha = 1.5 if len(history) >= 2 else 1.0
        n, m = self.n, self.m
        if len(history) >= 2:
            prev = history[-2]
            v = 2.0 * last.v.values - prev.v.values
            w = 2.0 * last.w.values - prev.w.values
            mu2 = 2.0 * last.mu2 - prev.mu2
        else:
            v, w, mu2 = last.v.values.copy(), last.w.values.copy(), last.mu2
        if self.mu_fixed is not None:
            mu2 = 0.0
        mu1_base = last.mu1 + 0.5 * dt * last.mu2

        def mu1_of(mu2_):
            return float(self.mu_fixed) if self.mu_fixed is not None else mu1_base + 0.5 * dt * mu2_

        norms = []
        g = None
        if self.mu_fixed is None:
            g = np.hstack([self.w_q[:, None] * self.template.v_hat_xi.values,
                           np.zeros((n, m))]).ravel()
        converged = False
        for it in range(1, self.max_iters + 1):
            mu1 = mu1_of(mu2)
            R1, R2, psi = self.residual(v, w, mu1, mu2, history, dt)
            R = np.hstack([R1, R2])
            rnorm = max(float(np.max(np.abs(R))), abs(psi))
            norms.append(rnorm)
            if rnorm <= self.newton_tol:
                converged = True
                break
            if not np.isfinite(rnorm):
                break
            J = self.jacobian(v, w, mu1, mu2, alpha, dt)
            try:
                lu = J.lu()
            except SingularMatrixError as exc:
                raise StepFailure(f"singular Newton matrix at t={last.t + dt}: {exc}",
                                  last.t + dt, norms) from exc
            if self.mu_fixed is not None:
                dz = lu.solve(-R.ravel())
                dmu = 0.0
            else:
                B = self.dR_dmu(v, w, mu1, mu2, dt).ravel()[:, None]
                dz, y = bordered_solve(lu.solve, B, g[None, :], np.zeros((1, 1)),
                                       -R.ravel(), np.array([-psi]))
                dmu = float(y[0])
            dz = dz.reshape(n, 2 * m)
            v, w = v + dz[:, :m], w + dz[:, m:]
            mu2 += dmu
        if not converged:
            raise StepFailure(f"Newton failed at t={last.t + dt}: residuals {norms[-3:]}",
                              last.t + dt, norms)
        mu1 = mu1_of(mu2)
        p = self.problem
        sonic = bool(abs(np.linalg.det(p.A - mu1**2 * p.M))
                     <= self.sonic_tol * abs(np.linalg.det(p.A)))
        if sonic:
            warnings.warn(f"near-sonic regime at t={last.t + dt}: A - mu1^2 M almost singular")
        gamma = last.gamma + 0.5 * dt * (last.mu1 + mu1)
        return WaveFreezeState(Field(self.grid, v), Field(self.grid, w), mu1, float(mu2),
                               float(gamma), last.t + dt, psi, it, sonic)

    def energy(self, state: WaveFreezeState) -> float:
        """``(|w|_M^2 + |v_x|_A^2) / 2`` with forward differences (conserved
        by the semi-discrete linear wave equation)."""
        p, h = self.problem, self.grid.h
        w, v = state.w.values, state.v.values
        kin = float(np.sum(self.w_q[:, None] * w * (w @ p.M.T)))
        dv = np.diff(v, axis=0) / h
        pot = float(np.sum(h * dv * (dv @ p.A.T)))
        return 0.5 * (kin + pot)


def integrate_wave(solver: WaveFreeze1D, u0: Field, v0: Field, dt: float, t_end: float,
                   steady_tol: float = 1e-8, stop_when_steady: bool = True, callback=None):
    state = solver.initial_state(u0, v0)
    history = [state]
    ts = TimeSeries(("mu_1", "mu_2"), ("gamma", "dv_norm"))
    ts.append(0.0, [state.mu1, state.mu2], state.phase_residual, 0, 0.0, 0.0)
    for _ in range(int(round(t_end / dt))):
        new = solver.step(history[-2:], dt)
        dv = max(float(np.max(np.abs(new.v.values - state.v.values))),
                 float(np.max(np.abs(new.w.values - state.w.values)))) / dt
        dmu = abs(new.mu1 - state.mu1) / dt
        ts.append(new.t, [new.mu1, new.mu2], new.phase_residual, new.newton_iters,
                  new.gamma, dv)
        history = [history[-1], new]
        state = new
        if callback is not None:
            callback(state)
        if stop_when_steady and dv <= steady_tol and dmu <= steady_tol:
            break
    return ts, state


def wave_problem_from_config(cfg: RunConfig) -> WaveProblem:
    if cfg.problem in ("qnwe", "wave"):
        b = cfg.get("b", [0.0, 0.4, 0.5, 0.85, 1.0])
        reaction = quintic_nagumo_f(b) if cfg.problem == "qnwe" else None
        damping = float(cfg.get("damping", 1.0 if cfg.problem == "qnwe" else 0.0))
        return WaveProblem.scalar(reaction, float(cfg.get("M", 0.5)), float(cfg.get("A", 1.0)),
                                  damping, name=cfg.problem)
    raise ConfigError(f"unknown wave problem {cfg.problem!r}")


def _wave_initial(cfg: RunConfig, grid: Grid1D):
    x = grid.nodes()
    scale = float(cfg.get("u0_scale", 2.0))
    kind = str(cfg.get("u0", "tanh"))
    if kind == "tanh":
        u0 = 0.5 * (1.0 + np.tanh(x / scale))
    elif kind == "gauss":
        u0 = np.exp(-x**2 / scale**2)
    else:
        raise ConfigError(f"unknown initial profile {kind!r}")
    return Field(grid, u0), Field(grid, np.zeros_like(x))


def wave_freeze_run(cfg: RunConfig):
    """Run the frozen wave system from config; returns ``(TimeSeries, state)``."""
    problem = wave_problem_from_config(cfg)
    grid = cfg.grid1d()
    u0, v0 = _wave_initial(cfg, grid)
    template = TemplateProfile.from_field(u0)
    solver = WaveFreeze1D(problem, grid, template, cfg.newton_tol, int(cfg.get("max_iters", 25)))
    return integrate_wave(solver, u0, v0, cfg.dt, cfg.t_end, cfg.steady_tol,
                          bool(cfg.get("stop_when_steady", True)))


# --- first-order reduction -------------------------------------------------

def first_order_reduction(problem: WaveProblem, c: float = 1.0) -> Problem1D:
    """Hyperbolic 3m-system in ``U = (u, u_t + N u_x, u_t - N u_x + c u)``."""
    m, N = problem.m, problem.N
    Ninv = np.linalg.inv(N)
    Minv = problem.Minv
    E = sla.block_diag(N, N, -N)

    def parts(U):
        U1, U2, U3 = U[:, :m], U[:, m:2 * m], U[:, 2 * m:]
        ux = 0.5 * (U2 - U3 + c * U1) @ Ninv.T
        ut = 0.5 * (U2 + U3 - c * U1)
        return U1, U2, U3, ux, ut

    def f(U, Ux=None):
        U1, U2, U3, ux, ut = parts(U)
        g = problem.f(U1, ux, ut) @ Minv.T
        return np.hstack([-c * U1 + U3, g, g + c * U2])

    def d1f(U, Ux=None):
        n = U.shape[0]
        U1, _, _, ux, ut = parts(U)
        F1, F2, F3 = problem.d1f(U1, ux, ut), problem.d2f(U1, ux, ut), problem.d3f(U1, ux, ut)
        # chain rule through ux, ut
        dux = [0.5 * c * Ninv, 0.5 * Ninv, -0.5 * Ninv]
        dut = [-0.5 * c * np.eye(m), 0.5 * np.eye(m), 0.5 * np.eye(m)]
        dg = [np.einsum("ij,njk->nik", Minv, (F1 if k == 0 else 0.0) + F2 @ dux[k] + F3 @ dut[k])
              for k in range(3)]
        J = np.zeros((n, 3 * m, 3 * m))
        J[:, :m, :m] = -c * np.eye(m)
        J[:, :m, 2 * m:] = np.eye(m)
        for k in range(3):
            J[:, m:2 * m, k * m:(k + 1) * m] = dg[k]
            J[:, 2 * m:, k * m:(k + 1) * m] = dg[k]
        J[:, 2 * m:, m:2 * m] += c * np.eye(m)
        return J

    return Problem1D(3 * m, np.zeros((3 * m, 3 * m)), E=E, f=f, d1f=d1f,
                     name=f"{problem.name}-first-order")


def reduce_state(problem: WaveProblem, u: np.ndarray, ut: np.ndarray, ux: np.ndarray,
                 c: float = 1.0) -> np.ndarray:
    """Map ``(u, u_t, u_x)`` to the reduced variables ``U``."""
    N = problem.N
    return np.hstack([u, ut + ux @ N.T, ut - ux @ N.T + c * u])


def recover_derivatives(problem: WaveProblem, U: np.ndarray, c: float = 1.0):
    """Inverse of :func:`reduce_state`: returns ``(u, u_t, u_x)``."""
    m = problem.m
    U1, U2, U3 = U[:, :m], U[:, m:2 * m], U[:, 2 * m:]
    ut = 0.5 * (U2 + U3 - c * U1)
    ux = 0.5 * (U2 - U3 + c * U1) @ np.linalg.inv(problem.N).T
    return U1, ut, ux


def reduced_template(u_hat: Field, m: int) -> TemplateProfile:
    """Template acting on the first ``m`` reduced components only, so the
    phase condition coincides with the one of the second-order system."""
    base = TemplateProfile.from_field(u_hat)
    n = u_hat.grid.n
    vh = np.hstack([base.v_hat.values, np.zeros((n, 2 * m))])
    vx = np.hstack([base.v_hat_xi.values, np.zeros((n, 2 * m))])
    return TemplateProfile(Field(u_hat.grid, vh), Field(u_hat.grid, vx))
