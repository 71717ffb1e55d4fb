"""Linearization about travelling waves and the resolvent evaluator.

For a front ``(v*, mu*)`` of ``u_t = A u_xx + f(u, u_x)`` the linearization
is ``L w = A w'' + B(xi) w' + C(xi) w`` with ``B = mu* I + D2 f`` and
``C = D1 f``. Its essential spectrum is bounded by the dispersion curves of
the limiting constant-coefficient operators. On a truncated interval the
resolvent equation ``(lam - L) u = r`` is closed with projection boundary
conditions built from the stable/unstable solutions of the limit problems.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar

from .core import Field, Grid1D
from .discretize import BandedMatrix, DiffOp1D, SingularMatrixError
from .freeze1d import Problem1D

SPLIT_TOL = 1e-8


class SpectralConditionError(ValueError):
    """The limit quadratic problem does not split into ``m`` stable and ``m`` unstable roots."""


class ConditioningError(ValueError):
    """Boundary trace bases are too ill-conditioned to invert."""


class ResolventSingularError(SingularMatrixError):
    """The truncated resolvent system is singular (``lam`` near an eigenvalue)."""


# --- linearization -------------------------------------------------------------

@dataclass
class LinearizedOp1D:
    """Coefficients of ``L w = A w'' + B w' + C w`` on a grid.

    ``B`` and ``C`` are ``(n, m, m)`` arrays; ``B_minus`` etc. are the
    constant limits.
    """

    grid: Grid1D
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    B_minus: np.ndarray
    B_plus: np.ndarray
    C_minus: np.ndarray
    C_plus: np.ndarray
    v_star: Optional[Field] = None
    mu_star: float = 0.0

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def limits(self, sign: int) -> Tuple[np.ndarray, np.ndarray]:
        return (self.B_minus, self.C_minus) if sign < 0 else (self.B_plus, self.C_plus)

    def apply(self, w: np.ndarray) -> np.ndarray:
        """``L w`` with central differences (Neumann closure at the ends)."""
        w = np.asarray(w).reshape(self.grid.n, self.m)
        d1 = DiffOp1D("first_central", self.grid).apply_array(w)
        d2 = DiffOp1D("second_central", self.grid).apply_array(w)
        return (d2 @ self.A.T + np.einsum("nij,nj->ni", self.B, d1)
                + np.einsum("nij,nj->ni", self.C, w))


def linearize(v_star: Field, mu_star: float, problem: Problem1D,
              tail_tol: float = 1e-6) -> LinearizedOp1D:
    """Linearize ``problem`` about the travelling wave ``(v_star, mu_star)``."""
    if problem.hyperbolic:
        raise ValueError("linearize handles parabolic problems")
    g = v_star.grid
    v = np.asarray(v_star.values, dtype=float)
    m = problem.m
    vx = DiffOp1D("first_central", g).apply_array(v)
    C = np.array(problem.d1f(v, vx), dtype=float)
    B = np.broadcast_to(mu_star * np.eye(m), (g.n, m, m)).copy()
    if problem.d2f is not None:
        B = B + problem.d2f(v, vx)
    ends = v[[0, -1]]
    zeros = np.zeros_like(ends)
    C_lim = problem.d1f(ends, zeros)
    B_lim = np.broadcast_to(mu_star * np.eye(m), (2, m, m)).copy()
    if problem.d2f is not None:
        B_lim = B_lim + problem.d2f(ends, zeros)
    # the Neumann stencil vanishes at the end nodes, so look one cell inward
    edge = float(np.max(np.abs(np.vstack([v[1] - v[0], v[-1] - v[-2]])))) / g.h
    if edge > tail_tol:
        warnings.warn(f"wave tails not converged at the grid ends (|v_xi| = {edge:.2e})")
    return LinearizedOp1D(g, problem.A.copy(), B, C, B_lim[0], B_lim[1], C_lim[0], C_lim[1],
                          v_star, float(mu_star))


# --- dispersion set --------------------------------------------------------------

@dataclass
class DispersionSamples:
    omega: np.ndarray
    values: np.ndarray  # (n_omega, 2, m): branch values per sign (-, +)
    beta_hat: float
    argmax: Tuple[float, int]  # (omega, sign) of the rightmost point
    violated: bool

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["omega", "re", "im", "branch", "sign"])
            for i, om in enumerate(self.omega):
                for s_idx, sign in enumerate((-1, 1)):
                    for b, lam in enumerate(self.values[i, s_idx]):
                        wr.writerow([repr(float(om)), repr(float(lam.real)), repr(float(lam.imag)),
                                     b, sign])


def default_omega_grid(omega_max: float = 100.0, n: int = 4001) -> np.ndarray:
    return np.linspace(-omega_max, omega_max, n)


def _symbol_eigs(A, B, C, omega):
    return np.linalg.eigvals(-omega**2 * A + 1j * omega * B + C)


def _max_real(eig_fn, omegas: np.ndarray) -> Tuple[np.ndarray, float, float]:
    vals = np.array([np.sort_complex(eig_fn(om)) for om in omegas])
    re = vals.real.max(axis=1)
    k = int(np.argmax(re))
    best, best_om = float(re[k]), float(omegas[k])
    # golden-section refinement around the sampled maximum
    lo, hi = omegas[max(k - 1, 0)], omegas[min(k + 1, len(omegas) - 1)]
    if hi > lo:
        res = minimize_scalar(lambda om: -float(np.max(eig_fn(om).real)), bracket=(lo, best_om, hi)
                              if lo < best_om < hi else None, method="golden",
                              options={"xtol": 1e-12})
        if lo <= res.x <= hi and -res.fun > best:
            best, best_om = float(-res.fun), float(res.x)
    return vals, best, best_om


def dispersion_bound(op: LinearizedOp1D, omega_grid: Optional[np.ndarray] = None) -> DispersionSamples:
    """Sample ``sigma(-w^2 A + i w B_pm + C_pm)`` and return ``beta_hat = -max Re``."""
    om = default_omega_grid() if omega_grid is None else np.asarray(omega_grid, dtype=float)
    per_sign, best, where = [], -np.inf, (0.0, 0)
    for sign in (-1, 1):
        B, C = op.limits(sign)
        vals, mx, om_best = _max_real(lambda w: _symbol_eigs(op.A, B, C, w), om)
        per_sign.append(vals)
        if mx > best:
            best, where = mx, (om_best, sign)
    beta = -best
    if beta <= 0:
        warnings.warn(f"dispersion set reaches Re >= 0 (beta_hat = {beta:.3g})")
    return DispersionSamples(om, np.stack(per_sign, axis=1), float(beta), where, beta <= 0)


# --- quadratic eigenproblem at infinity -------------------------------------

@dataclass
class QuadPencilLimits:
    """Stable and unstable invariant pairs of ``A Y L^2 + B Y L + (C - lam) Y = 0``."""

    lam: complex
    sign: int
    Y_s: np.ndarray
    L_s: np.ndarray
    Y_u: np.ndarray
    L_u: np.ndarray
    residual: float
    roots: np.ndarray

    def trace_basis(self, kind: str) -> np.ndarray:
        """``[Y; Y Lambda]`` for the stable (``"s"``) or unstable (``"u"``) pair."""
        Y, L = (self.Y_s, self.L_s) if kind == "s" else (self.Y_u, self.L_u)
        return np.vstack([Y, Y @ L])


def qep_residual(A, B, C, lam, Y, L) -> float:
    R = A @ Y @ L @ L + B @ Y @ L + (C - lam * np.eye(A.shape[0])) @ Y
    return float(np.linalg.norm(R))


def qep_split(A, B, C, lam: complex, sign: int = 1, tol: float = SPLIT_TOL,
              residual_tol: float = 1e-10) -> QuadPencilLimits:
    """Split the roots of ``det(A r^2 + B r + C - lam) = 0`` into stable/unstable sets.

    Uses the companion pencil
    ``[[0, I], [-(C - lam), -B]] z = r [[I, 0], [0, A]] z``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    C = np.atleast_2d(np.asarray(C, dtype=complex))
    m = A.shape[0]
    I, Z = np.eye(m), np.zeros((m, m))
    left = np.block([[Z, I], [-(C - lam * I), -B]])
    right = np.block([[I, Z], [Z, A]])
    roots, vecs = sla.eig(left, right)
    if not np.all(np.isfinite(roots)):
        raise SpectralConditionError("infinite roots: A is singular")
    re = roots.real
    if np.any(np.abs(re) <= tol):
        raise SpectralConditionError(f"root on the imaginary axis at lam={lam}")
    s_idx, u_idx = np.flatnonzero(re < 0), np.flatnonzero(re > 0)
    if len(s_idx) != m or len(u_idx) != m:
        raise SpectralConditionError(
            f"splitting {len(s_idx)}/{len(u_idx)} instead of {m}/{m} at lam={lam}")
    s_idx = s_idx[np.argsort(re[s_idx])]
    u_idx = u_idx[np.argsort(re[u_idx])]
    Ys, Yu = vecs[:m, s_idx], vecs[:m, u_idx]
    Ys = Ys / np.linalg.norm(Ys, axis=0)
    Yu = Yu / np.linalg.norm(Yu, axis=0)
    for Y in (Ys, Yu):
        if np.linalg.cond(Y) > 1e8:
            warnings.warn("nearly defective root cluster: eigenvector block is ill-conditioned")
    Ls, Lu = np.diag(roots[s_idx]), np.diag(roots[u_idx])
    res = max(qep_residual(A, B, C, lam, Ys, Ls) / np.linalg.norm(Ys),
              qep_residual(A, B, C, lam, Yu, Lu) / np.linalg.norm(Yu))
    if res > residual_tol:
        raise SpectralConditionError(f"quadratic eigen-residual {res:.2e} above {residual_tol:g}")
    return QuadPencilLimits(complex(lam), sign, Ys, Ls, Yu, Lu, res, roots)


# --- boundary conditions ---------------------------------------------------------

@dataclass
class BoundaryRows:
    """``P_- u(x_-) + Q_- u'(x_-) + P_+ u(x_+) + Q_+ u'(x_+) = g``: each block ``2m x m``."""

    P_minus: np.ndarray
    Q_minus: np.ndarray
    P_plus: np.ndarray
    Q_plus: np.ndarray
    kind: str = "projection"


def projection_bc(minus: QuadPencilLimits, plus: QuadPencilLimits,
                  cond_max: float = 1e10) -> BoundaryRows:
    """Rows that annihilate the stable modes of ``-inf`` and the unstable modes of ``+inf``.

    At ``x_-`` the rows are the stable-coefficient part of the inverse of the
    full trace basis ``[Z_s, Z_u]``; at ``x_+`` the unstable-coefficient part.
    The boundary block built from ``Z_s(-)`` and ``Z_u(+)`` is then exactly
    the identity.
    """
    m = minus.Y_s.shape[0]
    rows = []
    for lim, keep in ((minus, "s"), (plus, "u")):
        T = np.hstack([lim.trace_basis("s"), lim.trace_basis("u")])
        if np.linalg.cond(T) > cond_max:
            raise ConditioningError(f"trace basis condition {np.linalg.cond(T):.2e}")
        Tinv = np.linalg.inv(T)
        rows.append(Tinv[:m] if keep == "s" else Tinv[m:])
    zero = np.zeros((m, m), dtype=complex)
    lm, lp = rows
    P_minus = np.vstack([lm[:, :m], zero])
    Q_minus = np.vstack([lm[:, m:], zero])
    P_plus = np.vstack([zero, lp[:, :m]])
    Q_plus = np.vstack([zero, lp[:, m:]])
    return BoundaryRows(P_minus, Q_minus, P_plus, Q_plus, "projection")


def dirichlet_bc(m: int) -> BoundaryRows:
    I, Z = np.eye(m), np.zeros((m, m))
    return BoundaryRows(np.vstack([I, Z]), np.vstack([Z, Z]), np.vstack([Z, I]),
                        np.vstack([Z, Z]), "dirichlet")


def boundary_block(bc: BoundaryRows, minus: QuadPencilLimits, plus: QuadPencilLimits) -> np.ndarray:
    """The ``2m x 2m`` matrix whose nonsingularity is the boundary condition test."""
    left = np.hstack([bc.P_minus, bc.Q_minus]) @ minus.trace_basis("s")
    right = np.hstack([bc.P_plus, bc.Q_plus]) @ plus.trace_basis("u")
    return np.hstack([left, right])


def limit_splits(op: LinearizedOp1D, lam: complex):
    return (qep_split(op.A, op.B_minus, op.C_minus, lam, -1),
            qep_split(op.A, op.B_plus, op.C_plus, lam, +1))


def boundary_rows(op: LinearizedOp1D, lam: complex,
                  bc: Union[str, BoundaryRows] = "projection") -> BoundaryRows:
    if isinstance(bc, BoundaryRows):
        return bc
    if bc == "dirichlet":
        return dirichlet_bc(op.m)
    if bc == "projection":
        return projection_bc(*limit_splits(op, lam))
    raise ValueError(f"unknown boundary condition {bc!r}")


# --- resolvent boundary value problem --------------------------------------------

def resolvent_matrix(lam: complex, op: LinearizedOp1D, bc: BoundaryRows) -> BandedMatrix:
    """Banded matrix of ``lam - L`` with boundary rows in the first and last node block.

    Interior rows use central differences; ``u'`` at the ends is the
    second-order one-sided difference.
    """
    g, m = op.grid, op.m
    n, h = g.n, g.h
    bw = 3 * m - 1
    mat = BandedMatrix.zeros(n * m, bw, bw, dtype=complex)
    ab = mat.ab

    def put(i_node, j_node, block):
        for a in range(m):
            for b in range(m):
                r, c = i_node * m + a, j_node * m + b
                ab[bw + r - c, c] += block[a, b]

    I = np.eye(m)
    A = op.A
    for i in range(1, n - 1):
        B, C = op.B[i], op.C[i]
        put(i, i - 1, -(A / h**2 - B / (2 * h)))
        put(i, i, lam * I + 2 * A / h**2 - C)
        put(i, i + 1, -(A / h**2 + B / (2 * h)))
    # boundary rows: first m rows from x_-, last m rows from x_+
    one_sided = (-1.5 / h, 2.0 / h, -0.5 / h)
    for rows, node, sgn, (P, Q) in (
            (slice(0, m), 0, 1, (bc.P_minus, bc.Q_minus)),
            (slice(m, 2 * m), n - 1, -1, (bc.P_plus, bc.Q_plus))):
        other = (bc.P_plus, bc.Q_plus) if node == 0 else (bc.P_minus, bc.Q_minus)
        if np.any(other[0][rows]) or np.any(other[1][rows]):
            raise ValueError("boundary rows must separate: each row block may involve one end only")
        Pr, Qr = P[rows], Q[rows]
        put(node, node, Pr + sgn * one_sided[0] * Qr)
        put(node, node + sgn, sgn * one_sided[1] * Qr)
        put(node, node + 2 * sgn, sgn * one_sided[2] * Qr)
    return mat


def solve_resolvent_bvp(lam: complex, rhs: Union[Field, np.ndarray], op: LinearizedOp1D,
                        bc: Union[str, BoundaryRows] = "projection",
                        bc_rhs: Optional[np.ndarray] = None) -> np.ndarray:
    """Solve ``(lam - L) u = rhs`` with boundary rows replacing the end equations.

    ``rhs`` may hold several right-hand sides as ``(n*m, k)``. Returns the
    solution with the same shape as ``rhs`` (``(n, m)`` for a Field).
    """
    rows = boundary_rows(op, lam, bc)
    mat = resolvent_matrix(lam, op, rows)
    g, m = op.grid, op.m
    is_field = isinstance(rhs, Field)
    r = np.array(rhs.values if is_field else rhs, dtype=complex)
    shape = r.shape
    r = r.reshape(g.n * m, -1)
    r[:m] = 0.0
    r[-m:] = 0.0
    if bc_rhs is not None:
        bc_rhs = np.asarray(bc_rhs, dtype=complex).reshape(2 * m, -1)
        r[:m] += bc_rhs[:m]
        r[-m:] += bc_rhs[m:]
    try:
        u = mat.lu().solve(r)
    except SingularMatrixError as exc:
        raise ResolventSingularError(f"resolvent singular at lam={lam}: {exc}") from exc
    return u.reshape(shape)


class ResolventPencil:
    """``L(lam) = lam - L`` on a truncated interval, as used by the contour solver."""

    def __init__(self, op: LinearizedOp1D, bc: Union[str, BoundaryRows] = "projection"):
        self.op, self.bc = op, bc
        self.size = op.grid.n * op.m
        self.weights = np.repeat(op.grid.weights(), op.m)
        self.diagnostics = []

    def solve(self, lam: complex, rhs: np.ndarray) -> np.ndarray:
        rows = boundary_rows(self.op, lam, self.bc)
        if self.bc == "projection":
            minus, plus = limit_splits(self.op, lam)
            ident = float(np.max(np.abs(boundary_block(rows, minus, plus) - np.eye(2 * self.op.m))))
            self.diagnostics.append({"lam": complex(lam), "qep_residual": max(minus.residual, plus.residual),
                                     "block_identity_error": ident})
        return solve_resolvent_bvp(lam, rhs, self.op, rows)

    def apply(self, lam: complex, x: np.ndarray) -> np.ndarray:
        """Interior residual ``(lam - L) x`` (boundary blocks excluded)."""
        x = np.asarray(x).reshape(self.op.grid.n, self.op.m)
        r = lam * x - self.op.apply(x)
        r[[0, -1]] = 0.0
        return r.ravel()


# --- damped wave equations ---------------------------------------------------------

@dataclass
class WavePencil:
    """``P(lam, d) = M lam^2 - (D3 + 2 mu M d) lam - (A - mu^2 M) d^2 - D1 + (mu D3 - D2) d``."""

    M: np.ndarray
    A: np.ndarray
    mu: float
    D1: np.ndarray
    D2: np.ndarray
    D3: np.ndarray
    limits: dict  # sign -> (D1, D2, D3)

    def symbol(self, lam: complex, omega: float, sign: int) -> np.ndarray:
        D1, D2, D3 = self.limits[sign]
        iw = 1j * omega
        return (self.M * lam**2 - (D3 + 2 * self.mu * iw * self.M) * lam
                - (self.A - self.mu**2 * self.M) * iw**2 - D1 + (self.mu * D3 - D2) * iw)

    def symbol_roots(self, omega: float, sign: int) -> np.ndarray:
        """All ``lam`` with ``det P_pm(lam, omega) = 0`` (companion form, ``2m`` roots)."""
        D1, D2, D3 = self.limits[sign]
        m = self.M.shape[0]
        iw = 1j * omega
        K1 = -(D3 + 2 * self.mu * iw * self.M)
        K0 = -(self.A - self.mu**2 * self.M) * iw**2 - D1 + (self.mu * D3 - D2) * iw
        I, Z = np.eye(m), np.zeros((m, m))
        left = np.block([[Z, I], [-K0, -K1]])
        right = np.block([[I, Z], [Z, self.M]])
        return sla.eigvals(left, right)


def wave_pencil_build(problem, v_star: Field, mu_star: float) -> WavePencil:
    """Coefficients of the linearized co-moving wave operator at ``(v_star, mu_star)``."""
    v = np.asarray(v_star.values, dtype=float)
    vx = DiffOp1D("first_central", v_star.grid).apply_array(v)
    arg = (v, vx, -mu_star * vx)
    D = [np.asarray(fn(*arg), dtype=float) for fn in (problem.d1f, problem.d2f, problem.d3f)]
    limits = {}
    for sign, idx in ((-1, 0), (1, -1)):
        end = v[[idx]]
        z = np.zeros_like(end)
        limits[sign] = tuple(np.asarray(fn(end, z, z), dtype=float)[0]
                             for fn in (problem.d1f, problem.d2f, problem.d3f))
    return WavePencil(problem.M.copy(), problem.A.copy(), float(mu_star), D[0], D[1], D[2], limits)


def wave_dispersion_bound(pencil: WavePencil, omega_grid: Optional[np.ndarray] = None) -> DispersionSamples:
    """Dispersion set of the wave pencil and ``beta_hat = -max Re``; ``beta_hat <= 0`` is flagged."""
    om = default_omega_grid() if omega_grid is None else np.asarray(omega_grid, dtype=float)
    per_sign, best, where = [], -np.inf, (0.0, 0)
    for sign in (-1, 1):
        vals, mx, om_best = _max_real(lambda w: pencil.symbol_roots(w, sign), om)
        per_sign.append(vals)
        if mx > best:
            best, where = mx, (om_best, sign)
    beta = -best
    if beta <= 0:
        warnings.warn(f"wave dispersion set is not strictly stable (beta_hat = {beta:.3g})")
    return DispersionSamples(om, np.stack(per_sign, axis=1), float(beta), where, beta <= 0)


# --- 2D linearization (symmetry checks) ----------------------------------------------

def linearized_matrix_2d(solver, v_star: Field, mu) -> "np.ndarray":
    """Sparse Jacobian of the SE(2)-frozen right-hand side at ``(v_star, mu)``.

    ``solver`` is a :class:`~freezewave.freeze_se2.Freeze2D`; ``mu`` holds
    ``(S12, c1, c2)``.
    """
    return solver.spatial_jacobian(np.asarray(v_star.values, dtype=float).ravel(),
                                   np.asarray(mu, dtype=float))


def symmetry_residuals(solver, v_star: Field, mu) -> list:
    """Residuals ``|L w - lam w| / |w|`` for the symmetry-generated eigenpairs."""
    from .liegroup import SEAlgebraElement, symmetry_eigenpairs
    mu = np.asarray(mu, dtype=float)
    elem = SEAlgebraElement(np.array([[0.0, mu[0]], [-mu[0], 0.0]]), mu[1:])
    J = linearized_matrix_2d(solver, v_star, mu)
    out = []
    for mode in symmetry_eigenpairs(v_star, elem):
        w = mode.field.values.ravel()
        nrm = np.linalg.norm(w)
        if mode.degenerate or nrm == 0:
            out.append((mode.eigenvalue, np.nan))
            continue
        out.append((mode.eigenvalue, float(np.linalg.norm(J @ w - mode.eigenvalue * w) / nrm)))
    return out
