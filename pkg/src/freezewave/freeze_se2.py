"""Freezing 2D reaction-diffusion systems ``u_t = A Lap u + f(u)`` on SE(2).

Frozen system on the square ``[-L, L]^2`` with Neumann closure::

    v_t = A Lap v + S12 (x2 d1 - x1 d2) v + c1 d1 v + c2 d2 v + f(v)

i.e. ``v_x (S x + c)`` with ``S = [[0, S12], [-S12, 0]]``, closed by one
rotational and two translational fixed phase conditions. Steps are BDF2 with
a modified Newton method: the sparse LU of the time-stepping matrix is kept
across iterations and steps and refreshed only when convergence slows down.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import ConfigError, Field, Grid2D, RunConfig, TimeSeries
from .discretize import DiffOp2D, bordered_solve
from .freeze1d import StepFailure
from .liegroup import SEAlgebraElement, SEGroupElement, compose, exp_se

log = logging.getLogger(__name__)


@dataclass
class Problem2D:
    """``u_t = A Lap u + f(u)``; ``f`` maps ``(N, m)`` to ``(N, m)``, ``df`` to ``(N, m, m)``."""

    m: int
    A: np.ndarray
    f: Callable
    df: Callable
    name: str = ""

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if self.A.shape != (self.m, self.m):
            raise ValueError("A must be m x m")
        if np.min(np.linalg.eigvals(self.A).real) < -1e-14:
            raise ValueError("A must satisfy Re sigma(A) >= 0")


def qcgl_rhs(alpha: complex, beta: complex, gamma_c: complex, delta: float) -> Problem2D:
    """Real form of ``z_t = alpha Lap z + (delta + beta|z|^2 + gamma|z|^4) z``."""
    alpha, beta, gamma_c = complex(alpha), complex(beta), complex(gamma_c)
    A = np.array([[alpha.real, -alpha.imag], [alpha.imag, alpha.real]])

    def f(u):
        z = u[:, 0] + 1j * u[:, 1]
        s = np.abs(z) ** 2
        g = (delta + beta * s + gamma_c * s**2) * z
        return np.column_stack([g.real, g.imag])

    def df(u):
        z = u[:, 0] + 1j * u[:, 1]
        s = np.abs(z) ** 2
        p = delta + beta * s + gamma_c * s**2
        q = (beta + 2.0 * gamma_c * s) * z  # dp/ds * z
        J = np.empty((u.shape[0], 2, 2))
        J[:, 0, 0] = p.real + 2.0 * q.real * u[:, 0]
        J[:, 0, 1] = -p.imag + 2.0 * q.real * u[:, 1]
        J[:, 1, 0] = p.imag + 2.0 * q.imag * u[:, 0]
        J[:, 1, 1] = p.real + 2.0 * q.imag * u[:, 1]
        return J

    return Problem2D(2, A, f, df, name="qcgl")


QCGL_PARAMS = dict(alpha=0.5 + 0.5j, beta=2.5 + 1.0j, gamma_c=-1.0 - 0.1j, delta=-0.5)


@dataclass
class FreezeState2D:
    v: Field
    S12: float
    c: np.ndarray
    gamma: SEGroupElement
    t: float
    phase_residual: float = 0.0
    newton_iters: int = 0

    @property
    def mu(self) -> SEAlgebraElement:
        return SEAlgebraElement(np.array([[0.0, self.S12], [-self.S12, 0.0]]), self.c)


def _block_diag_sparse(blocks: np.ndarray) -> sp.csr_matrix:
    n, m, _ = blocks.shape
    base = np.arange(n)[:, None, None] * m
    rows = np.broadcast_to(base + np.arange(m)[None, :, None], blocks.shape).ravel()
    cols = np.broadcast_to(base + np.arange(m)[None, None, :], blocks.shape).ravel()
    return sp.csr_matrix((blocks.ravel(), (rows, cols)), shape=(n * m, n * m))


class Freeze2D:
    """Modified-Newton BDF solver for the SE(2)-frozen system.

    With ``frozen=False`` the three algebra unknowns are held at zero and the
    phase rows are dropped (the original equation).
    """

    def __init__(self, problem: Problem2D, grid: Grid2D, template: Optional[Field] = None,
                 frozen: bool = True, newton_tol: float = 1e-10, max_iters: int = 40,
                 refactor_ratio: float = 0.3):
        self.problem, self.grid = problem, grid
        self.m = problem.m
        self.N = grid.node_count
        self.newton_tol, self.max_iters = newton_tol, max_iters
        self.refactor_ratio = refactor_ratio
        x = grid.nodes()
        self.x1, self.x2 = x[:, 0], x[:, 1]
        eye = sp.identity(self.m, format="csr")
        lap = DiffOp2D("laplacian5", grid).matrix()
        g1 = DiffOp2D("grad_component", grid, axis=0).matrix()
        g2 = DiffOp2D("grad_component", grid, axis=1).matrix()
        self.Lap = sp.kron(lap, problem.A, format="csr")
        self.G1 = sp.kron(g1, eye, format="csr")
        self.G2 = sp.kron(g2, eye, format="csr")
        rep = lambda a: np.repeat(a, self.m)
        self.Rot = (sp.diags(rep(self.x2)) @ self.G1 - sp.diags(rep(self.x1)) @ self.G2).tocsr()
        self.w = np.repeat(grid.weights(), self.m)
        self.frozen = frozen
        self.degenerate = False
        self._lu = None
        self._lu_key = None
        self.factorizations = 0
        if frozen:
            if template is None:
                raise ValueError("the frozen system needs a template")
            vh = template.values.ravel()
            self.vh = vh
            rows = [self.Rot @ vh, self.G1 @ vh, self.G2 @ vh]
            self.phase_rows = np.array([self.w * r for r in rows])  # (3, N*m)
            gram = self.phase_rows @ np.array(rows).T
            if np.linalg.svd(gram, compute_uv=False)[-1] <= 1e-12 * max(1.0, np.abs(gram).max()):
                warnings.warn("template is degenerate: algebra unknowns frozen at zero")
                self.degenerate = True
                self.frozen = False

    # operators ------------------------------------------------------------
    def spatial(self, z: np.ndarray, mu: np.ndarray) -> np.ndarray:
        v = z.reshape(self.N, self.m)
        out = self.Lap @ z + self.problem.f(v).ravel()
        if self.frozen:
            out += mu[0] * (self.Rot @ z) + mu[1] * (self.G1 @ z) + mu[2] * (self.G2 @ z)
        return out

    def dF_dmu(self, z: np.ndarray) -> np.ndarray:
        return np.column_stack([self.Rot @ z, self.G1 @ z, self.G2 @ z])

    def spatial_jacobian(self, z: np.ndarray, mu: np.ndarray) -> sp.csr_matrix:
        J = self.Lap + _block_diag_sparse(self.problem.df(z.reshape(self.N, self.m)))
        if self.frozen:
            J = J + mu[0] * self.Rot + mu[1] * self.G1 + mu[2] * self.G2
        return J.tocsc()

    def phase_values(self, z: np.ndarray) -> np.ndarray:
        if not self.frozen:
            return np.zeros(3)
        return self.phase_rows @ (z - self.vh)

    def residual(self, z, mu, history, dt):
        alpha, hist = self._bdf(history)
        return (alpha * z - hist) / dt - self.spatial(z, mu), self.phase_values(z)

    @staticmethod
    def _bdf(history):
        if len(history) >= 2:
            return 1.5, 2.0 * history[-1].v.values.ravel() - 0.5 * history[-2].v.values.ravel()
        return 1.0, history[-1].v.values.ravel()

    def _factor(self, z, mu, alpha, dt):
        K = (alpha / dt) * sp.identity(z.size, format="csc") - self.spatial_jacobian(z, mu)
        self._lu = spla.splu(K.tocsc())
        self._lu_key = (alpha, dt)
        self.factorizations += 1

    def _solve(self, rhs: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(rhs))

    # stepping ---------------------------------------------------------------
    def initial_state(self, v0: Field, t0: float = 0.0) -> FreezeState2D:
        z = v0.values.ravel()
        mu = self.consistent_mu(z)
        return FreezeState2D(v0.copy(), mu[0], mu[1:].copy(), SEGroupElement.identity(2), t0,
                             float(np.max(np.abs(self.phase_values(z)))))

    def consistent_mu(self, z: np.ndarray) -> np.ndarray:
        """Algebra element for which the phase conditions are stationary."""
        if not self.frozen:
            return np.zeros(3)
        F0 = self.spatial(z, np.zeros(3))
        M = self.phase_rows @ self.dF_dmu(z)
        try:
            return np.linalg.solve(M, -self.phase_rows @ F0)
        except np.linalg.LinAlgError:
            return np.zeros(3)

    def step(self, history: Sequence[FreezeState2D], dt: float) -> FreezeState2D:
        last = history[-1]
        alpha = 1.5 if len(history) >= 2 else 1.0
        mu_last = np.array([last.S12, *last.c])
        if len(history) >= 2:
            prev = history[-2]
            z = 2.0 * last.v.values.ravel() - prev.v.values.ravel()
            mu = 2.0 * mu_last - np.array([prev.S12, *prev.c])
        else:
            z, mu = last.v.values.ravel().copy(), mu_last.copy()
        if self._lu is None or self._lu_key != (alpha, dt):
            self._factor(z, mu, alpha, dt)
        norms = []
        fresh = False
        for it in range(1, self.max_iters + 1):
            R, psi = self.residual(z, mu, history, dt)
            rnorm = max(float(np.max(np.abs(R))), float(np.max(np.abs(psi))))
            norms.append(rnorm)
            if rnorm <= self.newton_tol:
                break
            if not np.isfinite(rnorm):
                raise StepFailure(f"non-finite residual at t={last.t + dt}", last.t + dt, norms)
            if len(norms) >= 2 and rnorm > self.refactor_ratio * norms[-2] and not fresh:
                self._factor(z, mu, alpha, dt)
                fresh = True
            else:
                fresh = False
            if self.frozen:
                dz, dmu = bordered_solve(self._solve, -self.dF_dmu(z), self.phase_rows,
                                         np.zeros((3, 3)), -R, -psi)
            else:
                dz, dmu = self._solve(-R), np.zeros(3)
            z = z + dz
            mu = mu + dmu
        else:
            raise StepFailure(f"Newton failed at t={last.t + dt}: residuals {norms[-3:]}",
                              last.t + dt, norms)
        mu_mid = 0.5 * (mu + mu_last)
        g = compose(last.gamma, exp_se(_algebra(mu_mid), dt))
        return FreezeState2D(Field(self.grid, z.reshape(self.N, self.m)), float(mu[0]),
                             mu[1:].copy(), g, last.t + dt,
                             float(np.max(np.abs(self.phase_values(z)))), it)

    def boundary_proximity(self, v: Field, cells: int = 5, rel: float = 1e-2) -> bool:
        """True when the profile is non-negligible within ``cells`` of the boundary."""
        n = self.grid.n_per_axis
        amp = np.linalg.norm(v.values, axis=1).reshape(n, n)
        frame = np.ones((n, n), dtype=bool)
        frame[cells:n - cells, cells:n - cells] = False
        return bool(amp[frame].max() > rel * max(amp.max(), 1e-300))


def _algebra(mu: np.ndarray) -> SEAlgebraElement:
    return SEAlgebraElement(np.array([[0.0, mu[0]], [-mu[0], 0.0]]), mu[1:])


def reconstruct_se2(times: Sequence[float], mus: Sequence, gamma0: Optional[SEGroupElement] = None):
    """Lie-Euler reconstruction ``g_{i+1} = g_i exp(dt mu_{i+1/2})``.

    ``mus`` holds algebra elements (or ``(S12, c1, c2)`` triples) sampled at
    ``times``; the midpoint value is the average of neighbouring samples.
    """
    elems = [m if isinstance(m, SEAlgebraElement) else _algebra(np.asarray(m, dtype=float))
             for m in mus]
    path = [gamma0 if gamma0 is not None else SEGroupElement.identity(2)]
    for i in range(len(times) - 1):
        dt = times[i + 1] - times[i]
        mid = (elems[i] + elems[i + 1]).scale(0.5)
        path.append(compose(path[-1], exp_se(mid, dt)))
    return path


def freeze2d_residual(state: FreezeState2D, prev: Sequence[FreezeState2D], dt: float,
                      problem: Problem2D, template: Field) -> np.ndarray:
    """Stacked ``[BDF residual, three phase values]`` (``dt = inf``: spatial only)."""
    solver = Freeze2D(problem, state.v.grid, template)
    z = state.v.values.ravel()
    mu = np.array([state.S12, *state.c])
    if np.isinf(dt):
        R = -solver.spatial(z, mu)
    else:
        R, _ = solver.residual(z, mu, prev, dt)
    return np.concatenate([R, solver.phase_values(z)])


def vortex_initial(grid: Grid2D, scale: float = 5.0, width2: float = 49.0) -> Field:
    """``z0 = (x1 + i x2)/scale * exp(-|x|^2 / width2)`` as a real 2-vector field."""
    x = grid.nodes()
    z = (x[:, 0] + 1j * x[:, 1]) / scale * np.exp(-np.sum(x**2, axis=1) / width2)
    return Field(grid, np.column_stack([z.real, z.imag]))


def rotate_quarter(v: Field) -> Field:
    """Exact rotation by pi/2 on the square grid: ``v(R^T x)``."""
    n = v.grid.n_per_axis
    img = v.values.reshape(n, n, v.m)  # [j(x2), i(x1), comp]
    # R^T (x1, x2) = (x2, -x1): new[j, i] = old at (x1' = x2_j, x2' = -x1_i)
    out = np.empty_like(img)
    idx = np.arange(n)
    out[idx[:, None], idx[None, :]] = img[(n - 1 - idx)[None, :], idx[:, None]]
    return Field(v.grid, out.reshape(n * n, v.m))


def integrate2d(solver: Freeze2D, v0: Field, dt: float, t_end: float, t0: float = 0.0,
                steady_tol: float = 0.0, callback=None):
    state = solver.initial_state(v0, t0)
    history = [state]
    ts = TimeSeries(("S12", "c1", "c2"), ("dv_norm",))
    ts.append(state.t, [state.S12, *state.c], state.phase_residual, 0, 0.0)
    warned = False
    for _ in range(int(round((t_end - t0) / dt))):
        new = solver.step(history[-2:], dt)
        dv = float(np.max(np.abs(new.v.values - state.v.values))) / dt
        dmu = float(np.max(np.abs(np.array([new.S12, *new.c]) - [state.S12, *state.c]))) / dt
        ts.append(new.t, [new.S12, *new.c], new.phase_residual, new.newton_iters, dv)
        history = [history[-1], new]
        state = new
        if not warned and solver.boundary_proximity(state.v):
            warnings.warn(f"profile reaches within 5 cells of the boundary at t={state.t:g}")
            warned = True
        if callback is not None:
            callback(state)
        if steady_tol and dv <= steady_tol and dmu <= steady_tol:
            break
    return ts, state


def run_freeze2d(cfg: RunConfig, initial: Optional[Field] = None):
    """Pre-run the original equation, then switch on the frozen system.

    Config keys: ``alpha_re, alpha_im, beta_re, ...`` (QCGL coefficients),
    ``t_pre`` and ``dt_pre`` for the unfrozen pre-run, ``rotate_initial``
    (quarter turns applied to the initial data), ``initial`` (``vortex`` or
    ``zero``). Returns ``(TimeSeries, final state)``.
    """
    if cfg.problem not in ("qcgl", "heat2d"):
        raise ConfigError(f"unknown 2D problem {cfg.problem!r}")
    grid = cfg.grid2d()
    if cfg.problem == "qcgl":
        pars = {k: complex(cfg.get(k + "_re", np.real(v)), cfg.get(k + "_im", np.imag(v)))
                for k, v in QCGL_PARAMS.items() if k != "delta"}
        problem = qcgl_rhs(pars["alpha"], pars["beta"], pars["gamma_c"],
                           float(cfg.get("delta", QCGL_PARAMS["delta"])))
    else:
        problem = Problem2D(1, [[1.0]], lambda u: np.zeros_like(u),
                            lambda u: np.zeros((u.shape[0], 1, 1)), name="heat2d")
    if initial is None:
        kind = cfg.get("initial", "vortex")
        if kind == "vortex":
            initial = vortex_initial(grid, float(cfg.get("z0_scale", 5.0)),
                                     float(cfg.get("z0_width2", 49.0)))
        elif kind == "zero":
            initial = Field(grid, np.zeros((grid.node_count, problem.m)))
        else:
            raise ConfigError(f"unknown initial data {kind!r}")
    for _ in range(int(cfg.get("rotate_initial", 0)) % 4):
        initial = rotate_quarter(initial)
    t_pre = float(cfg.get("t_pre", 150.0))
    v = initial
    if t_pre > 0:
        pre = Freeze2D(problem, grid, frozen=False, newton_tol=cfg.newton_tol)
        _, st = integrate2d(pre, initial, float(cfg.get("dt_pre", 0.1)), t_pre)
        v = st.v
    solver = Freeze2D(problem, grid, v, frozen=True, newton_tol=cfg.newton_tol)
    if solver.degenerate:
        log.warning("degenerate template: S12, c1, c2 held at zero")
    return integrate2d(solver, v, cfg.dt, t_pre + cfg.t_end, t0=t_pre,
                       steady_tol=float(cfg.get("steady_tol_2d", 0.0)))
