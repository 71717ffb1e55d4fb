"""Decompose-and-freeze solver for several interacting 1D fronts.

The solution of ``u_t = A u_xx + f(u)`` is written as
``u(x, t) = sum_j v_j(x - gamma_j(t), t)``. Each profile ``v_j`` lives in its
own co-moving frame, carries the offset ``w_j`` (zero for the first wave, the
left limit ``v_j^-`` otherwise), and obeys::

    v_j,t = A v_j,xixi + mu_j v_j,xi + f(v_j + w_j) + C_j

where the coupling ``C_j`` redistributes the interaction defect
``f(sum_k v_k) - sum_k f(v_k + w_k)`` with a dynamic partition of unity built
from a positive bump ``phi``. Profiles are evaluated in the frames of the
other waves by :func:`nonlocal_shift`, which falls back to the known limits
outside the grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import ConfigError, Field, Grid1D, RunConfig, TimeSeries, load_field, save_field
from .freeze1d import (Freeze1D, FreezeState1D, Problem1D, StepFailure, TemplateProfile,
                       _band_to_sparse, coupled_newton_step, quintic_nagumo_f)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Mollifier:
    """Positive bump ``phi(x) = sech(beta x)`` with values in ``(0, 1]``."""

    beta: float = 1.0 / 20.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    def __call__(self, x) -> np.ndarray:
        # 1/cosh overflows to 0 for huge arguments; keep phi strictly positive
        z = np.minimum(np.abs(self.beta * np.asarray(x, dtype=float)), 700.0)
        return 1.0 / np.cosh(z)


def partition_unity(gammas: Sequence[float], x: np.ndarray, phi: Callable) -> np.ndarray:
    """Weights ``Q_j(x) = phi(x - gamma_j) / sum_k phi(x - gamma_k)``, shape ``(N, len(x))``."""
    gammas = np.asarray(gammas, dtype=float)
    if gammas.size < 1:
        raise ValueError("need at least one wave")
    vals = np.array([phi(x - g) for g in gammas])
    return vals / vals.sum(axis=0)


def _shift_weights(grid: Grid1D, delta: float):
    """Interpolation data for ``xi - delta``: indices, weights and masks."""
    x = grid.nodes() - delta
    s = (x - grid.x_minus) / grid.h
    near = np.rint(s)
    s = np.where(np.abs(s - near) <= 1e-10 * max(1.0, abs(delta) / grid.h), near, s)
    left = s < 0.0
    right = s > grid.n - 1
    inside = ~(left | right)
    i0 = np.clip(np.floor(s), 0, grid.n - 2).astype(int)
    theta = np.where(inside, s - i0, 0.0)
    return i0, theta, inside, left, right


def nonlocal_shift(v: Field, delta: float, limits: Tuple) -> Field:
    """Evaluate ``v(xi - delta)`` by linear interpolation.

    Points that leave ``[x_minus, x_plus]`` take the values ``limits[0]``
    (left) or ``limits[1]`` (right).
    """
    if not np.isfinite(delta):
        raise ValueError("shift must be finite")
    g = v.grid
    vals = v.values
    lo = np.broadcast_to(np.asarray(limits[0], dtype=float), (vals.shape[1],))
    hi = np.broadcast_to(np.asarray(limits[1], dtype=float), (vals.shape[1],))
    i0, theta, inside, left, right = _shift_weights(g, delta)
    out = (1.0 - theta)[:, None] * vals[i0] + theta[:, None] * vals[np.minimum(i0 + 1, g.n - 1)]
    out[left] = lo
    out[right] = hi
    out[~inside & ~left & ~right] = 0.0
    return Field(g, out)


def shift_matrix(grid: Grid1D, delta: float, m: int = 1) -> sp.csr_matrix:
    """Sparse matrix of the interior part of :func:`nonlocal_shift`."""
    i0, theta, inside, _, _ = _shift_weights(grid, delta)
    rows = np.flatnonzero(inside)
    P = sp.csr_matrix((np.concatenate([1.0 - theta[rows], theta[rows]]),
                       (np.concatenate([rows, rows]), np.concatenate([i0[rows], i0[rows] + 1]))),
                      shape=(grid.n, grid.n))
    return sp.kron(P, sp.identity(m), format="csr")


@dataclass
class MultiWaveState:
    profiles: List[Field]
    gammas: np.ndarray
    mus: np.ndarray
    offsets: np.ndarray  # (N, m)
    t: float
    phase_residuals: np.ndarray = None
    newton_iters: int = 0

    @property
    def N(self) -> int:
        return len(self.profiles)

    def wave(self, j: int) -> FreezeState1D:
        pr = 0.0 if self.phase_residuals is None else float(self.phase_residuals[j])
        return FreezeState1D(self.profiles[j], float(self.mus[j]), float(self.gammas[j]),
                             self.t, pr, self.newton_iters)


class MultiWaveProblem:
    """Coupled frozen system for ``N`` waves of ``u_t = A u_xx + f(u)``.

    Parameters
    ----------
    A
        Diffusion matrix.
    f, df
        Reaction ``(n, m) -> (n, m)`` and its Jacobian ``(n, m) -> (n, m, m)``.
    grid
        Shared Neumann grid for all profiles.
    limits
        Per wave ``(v_j^-, v_j^+)``; offsets follow as ``w_1 = 0``,
        ``w_j = v_j^-`` for ``j >= 2``.
    phi
        Mollifier for the partition of unity.
    """

    def __init__(self, A, f: Callable, df: Callable, grid: Grid1D, limits, templates,
                 phi: Callable = Mollifier(), newton_tol: float = 1e-10, max_iters: int = 40,
                 mode: str = "lagged"):
        if mode not in ("lagged", "coupled"):
            raise ValueError(f"unknown coupling mode {mode!r}")
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.m = self.A.shape[0]
        self.f, self.df = f, df
        self.grid = grid
        lim = np.asarray(limits, dtype=float).reshape(len(limits), 2, self.m)
        self.N = lim.shape[0]
        if len(templates) != self.N:
            raise ValueError("need one template per wave")
        self.offsets = np.zeros((self.N, self.m))
        self.offsets[1:] = lim[1:, 0]
        # limits of the stored (offset-free) profiles
        self.profile_limits = lim - self.offsets[:, None, :]
        self.phi = phi
        self.nodes = grid.nodes()
        self.mode = mode
        self.newton_tol, self.max_iters = newton_tol, max_iters
        self.solvers = [Freeze1D(self._wave_problem(j), grid, templates[j], "fixed",
                                 newton_tol, max_iters) for j in range(self.N)]

    def _wave_problem(self, j: int) -> Problem1D:
        w = self.offsets[j]
        return Problem1D(self.m, self.A, f=lambda u, ux: self.f(u + w),
                         d1f=lambda u, ux: self.df(u + w), name=f"wave{j + 1}")

    # coupling ----------------------------------------------------------
    def shifted(self, vs: Sequence[np.ndarray], gammas, j: int) -> List[np.ndarray]:
        """``v_k(xi - gamma_k + gamma_j)`` for every ``k`` in the frame of wave ``j``."""
        out = []
        for k, v in enumerate(vs):
            if k == j:
                out.append(v)
            else:
                lim = self.profile_limits[k]
                out.append(nonlocal_shift(Field(self.grid, v), gammas[k] - gammas[j],
                                          (lim[0], lim[1])).values)
        return out

    def weight(self, gammas, j: int) -> np.ndarray:
        xi = self.nodes
        den = sum(self.phi(xi - gammas[k] + gammas[j]) for k in range(self.N))
        return self.phi(xi) / den

    def coupling(self, vs: Sequence[np.ndarray], gammas) -> List[np.ndarray]:
        """Interaction terms ``C_j`` on the grid, one ``(n, m)`` array per wave."""
        if self.N == 1:
            return [np.zeros_like(vs[0])]
        out = []
        for j in range(self.N):
            s = self.shifted(vs, gammas, j)
            defect = self.f(sum(s)) - sum(self.f(s[k] + self.offsets[k]) for k in range(self.N))
            out.append(self.weight(gammas, j)[:, None] * defect)
        return out

    def coupling_jacobian(self, vs, gammas) -> List[List[sp.csr_matrix]]:
        """Blocks ``dC_j / dv_k`` (exact for the linear interpolation)."""
        blocks = []
        for j in range(self.N):
            s = self.shifted(vs, gammas, j)
            q = self.weight(gammas, j)
            dS = self.df(sum(s))
            row = []
            for k in range(self.N):
                D = q[:, None, None] * (dS - self.df(s[k] + self.offsets[k]))
                Dm = _block_diag(D)
                if k == j:
                    row.append(Dm)
                else:
                    row.append(Dm @ shift_matrix(self.grid, gammas[k] - gammas[j], self.m))
            blocks.append(row)
        return blocks

    # stepping ----------------------------------------------------------
    def initial_state(self, profiles: Sequence[Field], gammas0=None, t0: float = 0.0) -> MultiWaveState:
        vs = [np.array(p.values, dtype=float) for p in profiles]
        gam = np.zeros(self.N) if gammas0 is None else np.asarray(gammas0, dtype=float)
        C = self.coupling(vs, gam)
        mus = np.zeros(self.N)
        w = self.grid.weights()[:, None]
        for j, s in enumerate(self.solvers):
            vh = s.template.v_hat_xi.values
            F0 = s.spatial(vs[j], 0.0) + C[j]
            den = float(np.sum(w * vh * s.dF_dmu(vs[j], 0.0)))
            mus[j] = 0.0 if abs(den) < 1e-14 else -float(np.sum(w * vh * F0)) / den
        pr = np.array([s.phase_value(v, 0.0) for s, v in zip(self.solvers, vs)])
        return MultiWaveState([Field(self.grid, v) for v in vs], gam, mus, self.offsets.copy(),
                              t0, pr)

    def _gammas(self, last: MultiWaveState, mus, dt):
        return last.gammas + 0.5 * dt * (last.mus + np.asarray(mus))

    def residual(self, history: Sequence[MultiWaveState], vs, mus, dt):
        """Stacked residuals ``[(R_j, psi_j)]`` including the coupling."""
        hists = [[h.wave(j) for h in history] for j in range(self.N)]
        C = self.coupling(vs, self._gammas(history[-1], mus, dt))
        out = []
        for j, s in enumerate(self.solvers):
            R, psi = s.residual(vs[j], mus[j], hists[j], dt)
            out.append((R - C[j], psi))
        return out

    def step(self, history: Sequence[MultiWaveState], dt: float) -> MultiWaveState:
        if self.mode == "coupled":
            return self._step_coupled(history, dt)
        last = history[-1]
        hists = [[h.wave(j) for h in history] for j in range(self.N)]
        coupling = None
        if self.N > 1:
            coupling = lambda vs, mus: self.coupling(vs, self._gammas(last, mus, dt))
        new = coupled_newton_step(self.solvers, hists, dt, coupling)
        return self._assemble(last, [s.v.values for s in new], [s.mu for s in new], dt,
                              max(s.newton_iters for s in new))

    def _assemble(self, last, vs, mus, dt, iters) -> MultiWaveState:
        mus = np.asarray(mus, dtype=float)
        pr = np.array([s.phase_value(v, mu) for s, v, mu in zip(self.solvers, vs, mus)])
        return MultiWaveState([Field(self.grid, v) for v in vs], self._gammas(last, mus, dt),
                              mus, self.offsets.copy(), last.t + dt, pr, iters)

    def _step_coupled(self, history, dt) -> MultiWaveState:
        """Full Newton on all profiles and speeds with a sparse LU."""
        last = history[-1]
        alpha = 1.5 if len(history) >= 2 else 1.0
        pred = [s.predictor([h.wave(j) for h in history]) for j, s in enumerate(self.solvers)]
        vs = [p[0] for p in pred]
        mus = np.array([p[1] for p in pred])
        nm = self.grid.n * self.m
        norms = []
        for it in range(self.max_iters + 1):
            res = self.residual(history, vs, mus, dt)
            r = np.concatenate([R.ravel() for R, _ in res] + [np.array([p for _, p in res])])
            norms.append(float(np.max(np.abs(r))))
            if norms[-1] <= self.newton_tol:
                break
            if not np.isfinite(norms[-1]) or it == self.max_iters:
                raise StepFailure(f"coupled Newton failed at t={last.t + dt}", last.t + dt, norms)
            K = self._coupled_matrix(history, vs, mus, alpha, dt)
            d = spla.spsolve(K.tocsc(), -r)
            for j in range(self.N):
                vs[j] = vs[j] + d[j * nm:(j + 1) * nm].reshape(self.grid.n, self.m)
            mus = mus + d[self.N * nm:]
        return self._assemble(last, vs, mus, dt, it)

    def _coupled_matrix(self, history, vs, mus, alpha, dt) -> sp.csr_matrix:
        N, nm = self.N, self.grid.n * self.m
        gam = self._gammas(history[-1], mus, dt)
        dC = self.coupling_jacobian(vs, gam)
        blocks = [[None] * (N + 1) for _ in range(N + 1)]
        for j, s in enumerate(self.solvers):
            Jj = _band_to_sparse(s.spatial_jacobian(vs[j], mus[j]))
            for k in range(N):
                B = -dC[j][k]
                if k == j:
                    B = B + (alpha / dt) * sp.identity(nm) - Jj
                blocks[j][k] = B
        # speed columns: frame term plus the coupling's dependence on gamma
        cols = np.zeros((N * nm, N))
        eps = 1e-7
        for k in range(N):
            cols[k * nm:(k + 1) * nm, k] -= self.solvers[k].dF_dmu(vs[k], mus[k]).ravel()
            gp, gm = gam.copy(), gam.copy()
            gp[k] += eps
            gm[k] -= eps
            Cp, Cm = self.coupling(vs, gp), self.coupling(vs, gm)
            for j in range(N):
                cols[j * nm:(j + 1) * nm, k] -= 0.5 * dt * ((Cp[j] - Cm[j]) / (2 * eps)).ravel()
        rows = np.zeros((N, N * nm))
        for j, s in enumerate(self.solvers):
            rows[j, j * nm:(j + 1) * nm] = s.phase_gradient(vs[j], mus[j])[0]
        top = sp.bmat([[blocks[j][k] for k in range(N)] for j in range(N)], format="csr")
        return sp.bmat([[top, sp.csr_matrix(cols)], [sp.csr_matrix(rows), sp.csr_matrix((N, N))]],
                       format="csr")

    def superpose(self, state: MultiWaveState) -> Field:
        """``u(x) = sum_j v_j(x - gamma_j)`` on the shared grid."""
        total = np.zeros((self.grid.n, self.m))
        for j, v in enumerate(state.profiles):
            lim = self.profile_limits[j]
            total += nonlocal_shift(v, state.gammas[j], (lim[0], lim[1])).values
        return Field(self.grid, total)


def _block_diag(blocks: np.ndarray) -> sp.csr_matrix:
    n, m, _ = blocks.shape
    if m == 1:
        return sp.diags(blocks[:, 0, 0], format="csr")
    return sp.block_diag(list(blocks), format="csr")


def superpose(problem: MultiWaveProblem, state: MultiWaveState) -> Field:
    return problem.superpose(state)


def multiwave_residual(state: MultiWaveState, prev: Sequence[MultiWaveState], dt: float,
                       problem: MultiWaveProblem):
    """Residual of the coupled discrete system at ``state`` given the history ``prev``."""
    vs = [p.values for p in state.profiles]
    return problem.residual(prev, vs, state.mus, dt)


# --- configuration -------------------------------------------------------------

def _scalar_reaction(cfg: RunConfig):
    if cfg.problem != "qne":
        raise ConfigError(f"multiwave supports the qne problem, got {cfg.problem!r}")
    r = quintic_nagumo_f(cfg.get("b", [0.0, 1 / 32, 0.4, 0.73, 1.0]))
    return (lambda u: r(u), lambda u: r.derivative(u)[:, :, None])


def build_multiwave(cfg: RunConfig):
    """Problem and initial profiles from config.

    Keys: ``limits`` (list of ``[v^-, v^+]`` per wave), ``gamma0``,
    ``u0_scale``, ``mollifier_beta``, ``coupling_mode``, and optionally
    ``profiles`` (list of ``file:`` sources). Default initial profiles are
    ``(v_j^+ - v_j^-)/2 (tanh(xi/scale) + 1)``; templates are the initial
    profiles.
    """
    grid = cfg.grid1d()
    limits = np.asarray(cfg.get("limits", [[0.0, 0.4], [0.4, 1.0]]), dtype=float)
    if limits.ndim != 2 or limits.shape[1] != 2:
        raise ConfigError("limits must be a list of [v_minus, v_plus] pairs")
    n_waves = limits.shape[0]
    for j in range(n_waves - 1):
        if limits[j, 1] != limits[j + 1, 0]:
            raise ConfigError("neighbouring wave limits must match")
    scale = float(cfg.get("u0_scale", 5.0))
    x = grid.nodes()
    sources = cfg.get("profiles")
    profiles = []
    for j in range(n_waves):
        if sources:
            src = str(sources[j])
            if not src.startswith("file:"):
                raise ConfigError(f"unknown profile source {src!r}")
            profiles.append(load_field(src[5:]))
        else:
            height = limits[j, 1] - limits[j, 0]
            profiles.append(Field(grid, 0.5 * height * (np.tanh(x / scale) + 1.0)))
    f, df = _scalar_reaction(cfg)
    templates = [TemplateProfile.from_field(p) for p in profiles]
    prob = MultiWaveProblem([[float(cfg.get("diffusion", 1.0))]], f, df, grid, limits, templates,
                            Mollifier(float(cfg.get("mollifier_beta", 1 / 20))), cfg.newton_tol,
                            int(cfg.get("max_iters", 40)), str(cfg.get("coupling_mode", "lagged")))
    gam0 = np.asarray(cfg.get("gamma0", [0.0] * n_waves), dtype=float)
    return prob, profiles, gam0


def run_multiwave(cfg: RunConfig, out_dir: Optional[Path] = None, callback=None):
    """Integrate the decomposed system.

    Returns ``(list of TimeSeries, final MultiWaveState, problem)``; each
    series has columns ``mu_1`` and extras ``gamma, dv_norm``. With
    ``out_dir`` and ``snapshot_stride`` set, superposed snapshots are saved.
    """
    prob, profiles, gam0 = build_multiwave(cfg)
    state = prob.initial_state(profiles, gam0)
    series = [TimeSeries(("mu_1",), ("gamma", "dv_norm")) for _ in range(prob.N)]

    def log_row(s, dv):
        for j, ts in enumerate(series):
            ts.append(s.t, [s.mus[j]], float(s.phase_residuals[j]), s.newton_iters,
                      float(s.gammas[j]), float(dv[j]))

    log_row(state, np.zeros(prob.N))
    history = [state]
    stop = bool(cfg.get("stop_when_steady", True))
    for k in range(1, int(round(cfg.t_end / cfg.dt)) + 1):
        new = prob.step(history[-2:], cfg.dt)
        dv = np.array([np.max(np.abs(a.values - b.values)) for a, b in
                       zip(new.profiles, state.profiles)]) / cfg.dt
        dmu = np.abs(new.mus - state.mus) / cfg.dt
        log_row(new, dv)
        history = [history[-1], new]
        state = new
        if callback is not None:
            callback(state)
        if out_dir is not None and cfg.snapshot_stride and k % cfg.snapshot_stride == 0:
            save_field(prob.superpose(state), Path(out_dir) / f"superposition_{k:06d}.json")
        if stop and np.all(dv <= cfg.steady_tol) and np.all(dmu <= cfg.steady_tol):
            log.info("multiwave steady at t=%g", state.t)
            break
    return series, state, prob
