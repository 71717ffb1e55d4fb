"""Freezing solver for 1D parabolic and hyperbolic systems.

The frozen profile obeys ``v_t = F(v, mu)`` with

* parabolic: ``F = A v_xx + mu v_x + f(v, v_x)`` (central differences),
* hyperbolic: ``F = (E + mu I) v_x + f(v)`` (characteristic upwinding),

closed by one scalar phase condition, and the position follows
``gamma_t = mu``. Time stepping is BDF1 for the first step and BDF2 after;
each step is a Newton iteration on the bordered system

    [ alpha/dt - J_F   -dF/dmu ] [dv ]     [R  ]
    [ dpsi/dv          dpsi/dmu] [dmu] = - [psi]

solved by block elimination around a banded LU.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import ConfigError, Field, Grid1D, RunConfig, TimeSeries, l2_inner, save_field
from .discretize import (BandedMatrix, DiffOp1D, SingularMatrixError, assemble_banded_jacobian,
                         bordered_solve)

log = logging.getLogger(__name__)


class StepFailure(RuntimeError):
    """Newton did not converge within the iteration budget."""

    def __init__(self, message: str, t: float = float("nan"), residuals=()):
        super().__init__(message)
        self.t = t
        self.residuals = list(residuals)


class DegenerateTemplateError(ValueError):
    """A template or phase matrix is (numerically) singular."""


# --- nonlinearities --------------------------------------------------------

@dataclass(frozen=True)
class ScalarReaction:
    """Polynomial-type scalar reaction term with its derivative."""

    func: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __call__(self, u):
        return self.func(np.asarray(u, dtype=float))

    def derivative(self, u):
        return self.deriv(np.asarray(u, dtype=float))


def _poly_from_roots(roots, sign: float) -> ScalarReaction:
    roots = np.asarray(roots, dtype=float)
    coeffs = sign * np.poly(roots)
    dcoeffs = np.polyder(coeffs)

    def func(u):
        out = np.full_like(u, sign, dtype=float)
        for r in roots:
            out = out * (u - r)
        return out

    return ScalarReaction(func, lambda u: np.polyval(dcoeffs, u), f"roots={roots.tolist()}")


def quintic_nagumo_f(b: Sequence[float]) -> ScalarReaction:
    """``f(u) = -(u - b1)(u - b2)(u - b3)(u - b4)(u - b5)``.

    Requires ``0 = b1 < b2 < b3 < b4 < b5 = 1``.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (5,) or b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
        raise ValueError("quintic Nagumo roots must satisfy 0 = b1 < b2 < b3 < b4 < b5 = 1")
    return _poly_from_roots(b, -1.0)


def cubic_nagumo_f(a: float) -> ScalarReaction:
    """``f(u) = u (1 - u) (u - a)``, 0 < a < 1."""
    if not 0.0 < a < 1.0:
        raise ValueError("cubic Nagumo threshold must lie in (0, 1)")
    return _poly_from_roots([0.0, a, 1.0], -1.0)


# --- problem ---------------------------------------------------------------

def _zeros_f(u, ux):
    return np.zeros_like(u)


def _zeros_jac(u, ux):
    n, m = u.shape
    return np.zeros((n, m, m))


@dataclass
class Problem1D:
    """``u_t = A u_xx + E u_x + f(u, u_x)`` with ``m`` components.

    ``f``, ``d1f`` and ``d2f`` take arrays ``u, ux`` of shape ``(n, m)``;
    the Jacobians return ``(n, m, m)``. ``d2f=None`` marks an ``f`` that
    does not depend on ``u_x``. Either ``A`` or ``E`` must vanish.
    """

    m: int
    A: np.ndarray
    E: np.ndarray = None
    f: Callable = _zeros_f
    d1f: Callable = _zeros_jac
    d2f: Optional[Callable] = None
    name: str = ""
    _eig: tuple = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.E = (np.zeros((self.m, self.m)) if self.E is None
                  else np.atleast_2d(np.asarray(self.E, dtype=float)))
        if self.A.shape != (self.m, self.m) or self.E.shape != (self.m, self.m):
            raise ValueError("A and E must be m x m")
        if np.any(self.A != 0) and np.any(self.E != 0):
            raise ValueError("mixed parabolic-hyperbolic systems are not supported")
        if self.hyperbolic:
            lam, R = np.linalg.eig(self.E)
            if np.max(np.abs(lam.imag), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(lam))):
                raise ValueError("E has complex eigenvalues; the system is not hyperbolic")
            R = R.real
            if np.linalg.cond(R) > 1e10:
                raise ValueError("E is not diagonalizable")
            self._eig = (lam.real, R, np.linalg.inv(R))

    @property
    def hyperbolic(self) -> bool:
        return bool(np.all(self.A == 0) and np.any(self.E != 0))

    @property
    def characteristics(self):
        """``(speeds, R, R^{-1})`` with ``E = R diag(speeds) R^{-1}``."""
        return self._eig

    @classmethod
    def scalar_reaction(cls, reaction: Optional[ScalarReaction], diffusion: float = 1.0,
                        name: str = "") -> "Problem1D":
        if reaction is None:
            return cls(1, [[diffusion]], name=name)
        return cls(1, [[diffusion]],
                   f=lambda u, ux: reaction(u),
                   d1f=lambda u, ux: reaction.derivative(u)[:, :, None],
                   name=name or reaction.label)


# --- states and templates --------------------------------------------------

@dataclass
class FreezeState1D:
    v: Field
    mu: float
    gamma: float
    t: float
    phase_residual: float = 0.0
    newton_iters: int = 0


@dataclass
class TemplateProfile:
    v_hat: Field
    v_hat_xi: Field

    @classmethod
    def from_field(cls, v_hat: Field) -> "TemplateProfile":
        d1 = DiffOp1D("first_central", v_hat.grid)
        return cls(v_hat, Field(v_hat.grid, d1.apply_array(v_hat.values)))

    @property
    def degenerate(self) -> bool:
        return l2_inner(self.v_hat_xi, self.v_hat_xi) <= 1e-28


@dataclass
class Trajectory:
    t: np.ndarray
    values: np.ndarray  # (n_times, n, m)
    grid: Grid1D

    def field(self, k: int) -> Field:
        return Field(self.grid, self.values[k])


def _rmatvec(bm: BandedMatrix, x: np.ndarray) -> np.ndarray:
    """``A^T x`` for a banded ``A``."""
    n = bm.n
    y = np.zeros(n, dtype=np.result_type(bm.ab, x))
    for r in range(bm.l + bm.u + 1):
        s = r - bm.u  # ab[r, j] = A[j + s, j]
        lo, hi = max(0, -s), min(n, n - s)
        y[lo:hi] += bm.ab[r, lo:hi] * x[lo + s:hi + s]
    return y


# --- solver ----------------------------------------------------------------

class Freeze1D:
    """BDF/Newton solver for the frozen 1D system.

    Parameters
    ----------
    problem, grid
        Model and Neumann grid.
    template
        Reference profile for the fixed phase condition. Ignored when
        ``mu_fixed`` is given.
    phase
        ``"fixed"`` or ``"orthogonal"``.
    mu_fixed
        If not None, ``mu`` is held at this value and no phase row is used;
        ``mu_fixed=0`` integrates the original (unfrozen) equation.
    """

    def __init__(self, problem: Problem1D, grid: Grid1D,
                 template: Optional[TemplateProfile] = None, phase: str = "fixed",
                 newton_tol: float = 1e-10, max_iters: int = 25,
                 mu_fixed: Optional[float] = None):
        if grid.periodic:
            raise ValueError("the freezing solver uses Neumann grids")
        if phase not in ("fixed", "orthogonal"):
            raise ValueError(f"unknown phase condition {phase!r}")
        self.problem, self.grid = problem, grid
        self.n, self.m = grid.n, problem.m
        self.phase = phase
        self.newton_tol, self.max_iters = newton_tol, max_iters
        self.template = template
        self.degenerate = False
        if mu_fixed is None and phase == "fixed" and (template is None or template.degenerate):
            warnings.warn("template has no translational component; mu frozen at 0")
            self.degenerate = True
            mu_fixed = 0.0
        self.mu_fixed = mu_fixed
        self.w = grid.weights()
        self.d1 = DiffOp1D("first_central", grid)
        self.d2 = DiffOp1D("second_central", grid)
        self.d_pos = DiffOp1D("first_upwind_pos", grid)
        self.d_neg = DiffOp1D("first_upwind_neg", grid)
        self._D1 = sp.kron(self.d1.matrix(), sp.identity(self.m)).tocsr()
        self.upwind_trace: List[np.ndarray] = []
        self.cfl_warned = False

    # spatial operator -------------------------------------------------
    def _upwind_parts(self, mu: float):
        speeds, R, Rinv = self.problem.characteristics
        s = speeds + mu
        parts = []
        for k in range(self.m):
            if s[k] == 0.0:
                continue
            proj = np.outer(R[:, k], Rinv[k])
            parts.append((self.d_pos if s[k] > 0 else self.d_neg, s[k], proj))
        return s, parts

    def upwind_signs(self, mu: float) -> np.ndarray:
        """Signs of the characteristic speeds of ``E + mu I``."""
        speeds = self.problem.characteristics[0]
        return np.sign(speeds + mu)

    def spatial(self, v: np.ndarray, mu: float) -> np.ndarray:
        p = self.problem
        vx = self.d1.apply_array(v)
        if p.hyperbolic:
            _, parts = self._upwind_parts(mu)
            out = p.f(v, vx).astype(float, copy=True)
            for op, s, proj in parts:
                out += s * op.apply_array(v) @ proj.T
            return out
        return self.d2.apply_array(v) @ p.A.T + mu * vx + p.f(v, vx)

    def dF_dmu(self, v: np.ndarray, mu: float) -> np.ndarray:
        if self.problem.hyperbolic:
            _, parts = self._upwind_parts(mu)
            out = np.zeros_like(v, dtype=float)
            for op, s, proj in parts:
                out += op.apply_array(v) @ proj.T
            return out
        return self.d1.apply_array(v)

    def spatial_jacobian(self, v: np.ndarray, mu: float) -> BandedMatrix:
        p = self.problem
        vx = self.d1.apply_array(v)
        terms = [(None, p.d1f(v, vx))]
        if p.hyperbolic:
            _, parts = self._upwind_parts(mu)
            terms += [(op, s * proj) for op, s, proj in parts]
        else:
            terms += [(self.d2, p.A), (self.d1, mu)]
        if p.d2f is not None:
            terms.append((self.d1, p.d2f(v, vx)))
        return assemble_banded_jacobian(terms, self.n, self.m)

    # phase condition --------------------------------------------------
    def phase_value(self, v: np.ndarray, mu: float) -> float:
        if self.mu_fixed is not None:
            return 0.0
        if self.phase == "fixed":
            t = self.template
            return float(np.sum(self.w[:, None] * t.v_hat_xi.values * (v - t.v_hat.values)))
        vx = self.d1.apply_array(v)
        return float(np.sum(self.w[:, None] * vx * self.spatial(v, mu)))

    def phase_gradient(self, v: np.ndarray, mu: float, jac: Optional[BandedMatrix] = None):
        """``(dpsi/dv flattened, dpsi/dmu)``."""
        if self.phase == "fixed":
            return (self.w[:, None] * self.template.v_hat_xi.values).ravel(), 0.0
        vx = self.d1.apply_array(v)
        F = self.spatial(v, mu)
        if jac is None:
            jac = self.spatial_jacobian(v, mu)
        g = self._D1.T @ (self.w[:, None] * F).ravel() + _rmatvec(jac, (self.w[:, None] * vx).ravel())
        dmu = float(np.sum(self.w[:, None] * vx * self.dF_dmu(v, mu)))
        return g, dmu

    # time discretization ------------------------------------------------
    @staticmethod
    def bdf_coefficients(history: Sequence[FreezeState1D]):
        """``(alpha, h)`` so that ``v_t ~ (alpha v - h) / dt``."""
        if len(history) >= 2:
            return 1.5, 2.0 * history[-1].v.values - 0.5 * history[-2].v.values
        return 1.0, history[-1].v.values

    def residual(self, v: np.ndarray, mu: float, history: Sequence[FreezeState1D],
                 dt: float):
        alpha, hist = self.bdf_coefficients(history)
        if np.isinf(dt):
            R = -self.spatial(v, mu)
        else:
            R = (alpha * v - hist) / dt - self.spatial(v, mu)
        return R, self.phase_value(v, mu)

    def consistent_mu(self, v: np.ndarray) -> float:
        """``mu`` making the time derivative of the fixed phase vanish."""
        if self.mu_fixed is not None:
            return float(self.mu_fixed)
        if self.phase == "orthogonal":
            vx = self.d1.apply_array(v)
            F0 = self.spatial(v, 0.0)
            G = self.dF_dmu(v, 0.0)
            den = float(np.sum(self.w[:, None] * vx * G))
            num = float(np.sum(self.w[:, None] * vx * F0))
        else:
            vh = self.template.v_hat_xi.values
            F0 = self.spatial(v, 0.0)
            G = self.dF_dmu(v, 0.0)
            den = float(np.sum(self.w[:, None] * vh * G))
            num = float(np.sum(self.w[:, None] * vh * F0))
        if abs(den) < 1e-14:
            return 0.0
        return -num / den

    def initial_state(self, u0: Field, t0: float = 0.0, gamma0: float = 0.0) -> FreezeState1D:
        v = np.array(u0.values, dtype=float)
        mu = self.consistent_mu(v)
        return FreezeState1D(Field(self.grid, v), mu, gamma0, t0, self.phase_value(v, mu))

    def predictor(self, history: Sequence[FreezeState1D]):
        """Linear extrapolation from the last two states (copy for BDF1)."""
        last = history[-1]
        if len(history) >= 2:
            v = 2.0 * last.v.values - history[-2].v.values
            mu = 2.0 * last.mu - history[-2].mu
        else:
            v, mu = last.v.values.copy(), last.mu
        if self.mu_fixed is not None:
            mu = float(self.mu_fixed)
        return v, mu

    def newton_direction(self, v, mu, R, psi, alpha, dt, t_new=float("nan")):
        """Solve the bordered Newton system for ``(dv, dmu)``."""
        jac = self.spatial_jacobian(v, mu)
        J = BandedMatrix(jac.l, jac.u, -jac.ab)
        J.add_diagonal(alpha / dt)
        try:
            lu = J.lu()
        except SingularMatrixError as exc:
            raise StepFailure(f"singular Newton matrix at t={t_new}: {exc}", t_new) from exc
        if self.mu_fixed is not None:
            return lu.solve(-R.ravel()).reshape(self.n, self.m), 0.0
        g, dpsi = self.phase_gradient(v, mu, jac)
        B = -self.dF_dmu(v, mu).ravel()[:, None]
        dv, y = bordered_solve(lu.solve, B, g[None, :], np.array([[dpsi]]),
                               -R.ravel(), np.array([-psi]))
        return dv.reshape(self.n, self.m), float(y[0])

    def finish_step(self, last: FreezeState1D, v, mu, dt, iters) -> FreezeState1D:
        if self.problem.hyperbolic:
            self._monitor_cfl(mu, dt)
        gamma = last.gamma + 0.5 * dt * (last.mu + mu)
        return FreezeState1D(Field(self.grid, v), float(mu), float(gamma), last.t + dt,
                             self.phase_value(v, mu), iters)

    def step(self, history: Sequence[FreezeState1D], dt: float) -> FreezeState1D:
        """Advance one step from ``history[-1]`` (BDF2 if two states are given)."""
        return coupled_newton_step([self], [history], dt)[0]

    def _monitor_cfl(self, mu: float, dt: float) -> None:
        signs = self.upwind_signs(mu)
        self.upwind_trace.append(signs)
        speeds = self.problem.characteristics[0] + mu
        cfl = float(np.max(np.abs(speeds))) * dt / self.grid.h
        if cfl > 1.0 and not self.cfl_warned:
            warnings.warn(f"CFL number {cfl:.2f} > 1: implicit upwinding stays stable "
                          "but loses accuracy")
            self.cfl_warned = True


def coupled_newton_step(solvers: Sequence[Freeze1D], histories: Sequence[Sequence[FreezeState1D]],
                        dt: float, coupling=None) -> List[FreezeState1D]:
    """One implicit step for several frozen profiles advanced together.

    ``coupling(vs, mus)`` returns extra right-hand-side terms per profile.
    They enter the residual in full but are left out of the Newton matrix
    (lagged by one iterate), so each profile keeps its banded bordered
    solve. With a single solver and no coupling this is the plain step.
    """
    alpha = 1.5 if len(histories[0]) >= 2 else 1.0
    pred = [s.predictor(h) for s, h in zip(solvers, histories)]
    vs = [p[0] for p in pred]
    mus = [p[1] for p in pred]
    t_new = histories[0][-1].t + dt
    max_iters = max(s.max_iters for s in solvers)
    tol = min(s.newton_tol for s in solvers)
    norms = []
    for it in range(max_iters + 1):
        extra = coupling(vs, mus) if coupling is not None else None
        res = []
        for j, (s, h) in enumerate(zip(solvers, histories)):
            R, psi = s.residual(vs[j], mus[j], h, dt)
            if extra is not None:
                R = R - extra[j]
            res.append((R, psi))
        rnorm = max(max(float(np.max(np.abs(R))), abs(psi)) for R, psi in res)
        norms.append(rnorm)
        if rnorm <= tol:
            break
        if not np.isfinite(rnorm) or it == max_iters:
            raise StepFailure(f"Newton failed at t={t_new}: residuals {norms[-3:]}",
                              t_new, norms)
        for j, s in enumerate(solvers):
            dv, dmu = s.newton_direction(vs[j], mus[j], *res[j], alpha, dt, t_new)
            vs[j] = vs[j] + dv
            mus[j] = mus[j] + dmu
    return [s.finish_step(h[-1], vs[j], mus[j], dt, it)
            for j, (s, h) in enumerate(zip(solvers, histories))]


def pdae_residual(state: FreezeState1D, prev_states: Sequence[FreezeState1D], dt: float,
                  problem: Problem1D, template: Optional[TemplateProfile],
                  phase: str = "fixed") -> np.ndarray:
    """Stacked residual ``[R.ravel(), psi]`` of the time-discrete system.

    ``prev_states`` holds one (BDF1) or two (BDF2) states, oldest first.
    ``dt = inf`` gives the purely spatial residual.
    """
    solver = Freeze1D(problem, state.v.grid, template, phase)
    R, psi = solver.residual(state.v.values, state.mu, prev_states, dt)
    return np.concatenate([R.ravel(), [psi]])


def solve_steady(problem: Problem1D, v0: Field, mu0: float, template: TemplateProfile,
                 tol: float = 1e-11, max_iters: int = 30):
    """Newton for ``F(v, mu) = 0`` with the fixed phase condition.

    Uses a sparse LU of the full bordered matrix, which stays regular even
    though ``J_F`` alone has a near-zero (translational) eigenvalue.
    """
    solver = Freeze1D(problem, v0.grid, template, "fixed")
    v, mu = v0.values.astype(float).copy(), float(mu0)
    N = v.size
    for _ in range(max_iters):
        F = solver.spatial(v, mu)
        psi = solver.phase_value(v, mu)
        rnorm = max(float(np.max(np.abs(F))), abs(psi))
        if rnorm <= tol:
            return Field(v0.grid, v), mu, rnorm
        jac = solver.spatial_jacobian(v, mu)
        Jsp = _band_to_sparse(jac)
        g, _ = solver.phase_gradient(v, mu)
        col = solver.dF_dmu(v, mu).ravel()
        K = sp.bmat([[Jsp, col[:, None]], [g[None, :], None]], format="csc")
        delta = spla.spsolve(K, -np.concatenate([F.ravel(), [psi]]))
        v = v + delta[:N].reshape(v.shape)
        mu += float(delta[N])
    F = solver.spatial(v, mu)
    rnorm = max(float(np.max(np.abs(F))), abs(solver.phase_value(v, mu)))
    if rnorm > tol:
        raise StepFailure(f"steady Newton stalled at residual {rnorm:.2e}")
    return Field(v0.grid, v), mu, rnorm


def _band_to_sparse(bm: BandedMatrix) -> sp.csr_matrix:
    n = bm.n
    # band row r holds diagonal u - r, column-aligned exactly like scipy's dia format
    offsets = np.arange(bm.u, -bm.l - 1, -1)
    return sp.dia_matrix((bm.ab, offsets), shape=(n, n)).tocsr()


# --- problems from configuration -------------------------------------------

def problem_from_config(cfg: RunConfig) -> Problem1D:
    name = cfg.problem
    if name == "qne":
        b = cfg.get("b", [0.0, 0.4, 0.5, 0.85, 1.0])
        return Problem1D.scalar_reaction(quintic_nagumo_f(b), float(cfg.get("diffusion", 1.0)),
                                         name="qne")
    if name == "nagumo3":
        return Problem1D.scalar_reaction(cubic_nagumo_f(float(cfg.get("a", 0.25))),
                                         float(cfg.get("diffusion", 1.0)), name="nagumo3")
    if name == "heat":
        return Problem1D.scalar_reaction(None, float(cfg.get("diffusion", 1.0)), name="heat")
    if name == "transport":
        return Problem1D(1, [[0.0]], E=[[float(cfg.get("speed", 1.0))]], name="transport")
    raise ConfigError(f"unknown 1D problem {name!r}")


def initial_profile(cfg: RunConfig, grid: Grid1D) -> Field:
    """Initial data: ``u0 = tanh`` (0 to 1), ``tanh_down`` (1 to 0), ``zero`` or a file."""
    kind = str(cfg.get("u0", "tanh"))
    x = grid.nodes()
    scale = float(cfg.get("u0_scale", 1.0))
    if kind == "tanh":
        return Field(grid, 0.5 * (np.tanh(x / scale) + 1.0))
    if kind == "tanh_down":
        return Field(grid, 0.5 * (1.0 - np.tanh(x / scale)))
    if kind == "zero":
        return Field(grid, np.zeros_like(x))
    if kind.startswith("file:"):
        from .core import load_field
        f = load_field(kind[5:])
        if f.grid != grid:
            raise ConfigError("initial profile grid does not match the configured grid")
        return f
    raise ConfigError(f"unknown initial profile {kind!r}")


def _template(cfg: RunConfig, u0: Field) -> TemplateProfile:
    src = cfg.template
    if src == "initial":
        return TemplateProfile.from_field(u0)
    if src.startswith("file:"):
        from .core import load_field
        return TemplateProfile.from_field(load_field(src[5:]))
    raise ConfigError(f"unknown template source {src!r}")


def run_freeze(cfg: RunConfig, out_dir: Optional[Path] = None, progress: bool = False):
    """Integrate the frozen system until ``t_end`` or until steady.

    Returns ``(TimeSeries, final FreezeState1D)``. Profiles are written to
    ``out_dir`` every ``cfg.snapshot_stride`` steps when both are set.
    """
    problem = problem_from_config(cfg)
    grid = cfg.grid1d()
    u0 = initial_profile(cfg, grid)
    template = _template(cfg, u0)
    solver = Freeze1D(problem, grid, template, cfg.phase_condition, cfg.newton_tol,
                      int(cfg.get("max_iters", 25)))
    return integrate(solver, u0, cfg.dt, cfg.t_end, cfg.steady_tol,
                     snapshot_stride=cfg.snapshot_stride, out_dir=out_dir,
                     stop_when_steady=bool(cfg.get("stop_when_steady", True)))


def integrate(solver: Freeze1D, u0: Field, dt: float, t_end: float, steady_tol: float = 1e-8,
              snapshot_stride: int = 0, out_dir: Optional[Path] = None,
              stop_when_steady: bool = True, callback=None):
    """Time loop shared by :func:`run_freeze` and the tests."""
    state = solver.initial_state(u0)
    history = [state]
    ts = TimeSeries(("mu_1",), ("gamma", "dv_norm"))
    ts.append(state.t, [state.mu], state.phase_residual, 0, state.gamma, 0.0)
    nsteps = int(round(t_end / dt))
    for k in range(1, nsteps + 1):
        new = solver.step(history[-2:], dt)
        dv = float(np.max(np.abs(new.v.values - state.v.values))) / dt
        dmu = abs(new.mu - state.mu) / dt
        ts.append(new.t, [new.mu], new.phase_residual, new.newton_iters, new.gamma, dv)
        history = [history[-1], new]
        state = new
        if callback is not None:
            callback(state)
        if out_dir is not None and snapshot_stride and k % snapshot_stride == 0:
            save_field(state.v, Path(out_dir) / f"profile_{k:06d}.json")
        if stop_when_steady and dv <= steady_tol and dmu <= steady_tol:
            log.info("steady state reached at t=%g", state.t)
            break
    return ts, state


def direct_simulate(problem: Problem1D, u0: Field, dt: float, t_end: float,
                    record_stride: int = 1, newton_tol: float = 1e-10) -> Trajectory:
    """Integrate the unfrozen equation with the same BDF/Newton machinery."""
    solver = Freeze1D(problem, u0.grid, None, "fixed", newton_tol, mu_fixed=0.0)
    state = solver.initial_state(u0)
    history = [state]
    times, values = [state.t], [state.v.values.copy()]
    nsteps = int(round(t_end / dt))
    for k in range(1, nsteps + 1):
        new = solver.step(history[-2:], dt)
        history = [history[-1], new]
        if k % record_stride == 0:
            times.append(new.t)
            values.append(new.v.values.copy())
    return Trajectory(np.array(times), np.array(values), u0.grid)
