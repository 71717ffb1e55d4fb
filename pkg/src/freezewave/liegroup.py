"""SE(d) and se(d) arithmetic in the (d+1)x(d+1) matrix representation.

Group elements are pairs ``(Q, b)`` standing for ``[[Q, b], [0, 1]]``;
algebra elements are pairs ``(S, c)`` standing for ``[[S, c], [0, 0]]``
with skew ``S``. Group actions and exponentials are supported for d = 1, 2;
the ad-spectrum also for d = 3.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import DimensionError, Field, Grid1D
from .discretize import DiffOp1D, DiffOp2D


@dataclass(frozen=True)
class SEAlgebraElement:
    S: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if S.shape != (c.size, c.size):
            raise DimensionError("S must be d x d for a length-d translation part")
        # keep only the strictly lower triangle, so S^T = -S holds exactly
        low = np.tril(S, -1)
        object.__setattr__(self, "S", low - low.T)
        object.__setattr__(self, "c", c)

    @property
    def d(self) -> int:
        return self.c.size

    @classmethod
    def translation(cls, c) -> "SEAlgebraElement":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(np.zeros((c.size, c.size)), c)

    @classmethod
    def rotation2d(cls, theta: float, c=(0.0, 0.0)) -> "SEAlgebraElement":
        """``S = [[0, -theta], [theta, 0]]``: counter-clockwise rate ``theta``."""
        return cls(np.array([[0.0, -theta], [theta, 0.0]]), c)

    @classmethod
    def from_matrix(cls, a: np.ndarray) -> "SEAlgebraElement":
        d = a.shape[0] - 1
        return cls(a[:d, :d], a[:d, d])

    def matrix(self) -> np.ndarray:
        d = self.d
        a = np.zeros((d + 1, d + 1))
        a[:d, :d] = self.S
        a[:d, d] = self.c
        return a

    def coords(self) -> np.ndarray:
        """Coordinates in the canonical basis: ``S[j, i]`` for i < j, then c."""
        return np.concatenate([[self.S[j, i] for i, j in _so_pairs(self.d)], self.c])

    @classmethod
    def from_coords(cls, d: int, x) -> "SEAlgebraElement":
        x = np.asarray(x)
        S = np.zeros((d, d), dtype=x.dtype)
        pairs = _so_pairs(d)
        for k, (i, j) in enumerate(pairs):
            S[j, i] = x[k]
            S[i, j] = -x[k]
        return cls(S, x[len(pairs):])

    def __add__(self, other: "SEAlgebraElement") -> "SEAlgebraElement":
        return SEAlgebraElement(self.S + other.S, self.c + other.c)

    def scale(self, t: float) -> "SEAlgebraElement":
        return SEAlgebraElement(t * self.S, t * self.c)


@dataclass(frozen=True)
class SEGroupElement:
    Q: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if Q.shape != (b.size, b.size):
            raise DimensionError("Q must be d x d for a length-d translation part")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.b.size

    @classmethod
    def identity(cls, d: int) -> "SEGroupElement":
        return cls(np.eye(d), np.zeros(d))

    def matrix(self) -> np.ndarray:
        d = self.d
        g = np.eye(d + 1)
        g[:d, :d] = self.Q
        g[:d, d] = self.b
        return g

    def orthogonality_defect(self) -> float:
        return float(np.max(np.abs(self.Q.T @ self.Q - np.eye(self.d))))


def _so_pairs(d: int):
    return list(itertools.combinations(range(d), 2))


def _same_d(a, b) -> None:
    if a.d != b.d:
        raise DimensionError(f"dimension mismatch: {a.d} vs {b.d}")


def compose(g1: SEGroupElement, g2: SEGroupElement) -> SEGroupElement:
    _same_d(g1, g2)
    return SEGroupElement(g1.Q @ g2.Q, g1.Q @ g2.b + g1.b)


def inverse(g: SEGroupElement) -> SEGroupElement:
    return SEGroupElement(g.Q.T, -g.Q.T @ g.b)


def _rot(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


def _dressing(phi: float) -> np.ndarray:
    """``V(phi) = (1/phi) [[sin, -(1-cos)], [1-cos, sin]]``, series near 0."""
    if abs(phi) < 1e-4:
        a = 1.0 - phi**2 / 6.0 + phi**4 / 120.0
        b = phi / 2.0 - phi**3 / 24.0
    else:
        a = np.sin(phi) / phi
        b = (1.0 - np.cos(phi)) / phi
    return np.array([[a, -b], [b, a]])


def exp_se(mu: SEAlgebraElement, t: float = 1.0) -> SEGroupElement:
    """``exp(t * mu)`` in closed form for d = 1, 2."""
    if mu.d == 1:
        return SEGroupElement(np.eye(1), t * mu.c)
    if mu.d == 2:
        phi = t * mu.S[1, 0]
        return SEGroupElement(_rot(phi), _dressing(phi) @ (t * mu.c))
    raise ValueError(f"exp_se supports d = 1, 2 (got d = {mu.d})")


def bracket(mu: SEAlgebraElement, nu: SEAlgebraElement) -> SEAlgebraElement:
    """Matrix commutator ``mu nu - nu mu``."""
    _same_d(mu, nu)
    return SEAlgebraElement(mu.S @ nu.S - nu.S @ mu.S, mu.S @ nu.c - nu.S @ mu.c)


def ad_matrix(mu_star: SEAlgebraElement) -> np.ndarray:
    """Matrix of ``nu -> [nu, mu_star]`` in the canonical coordinates."""
    d = mu_star.d
    dim = d * (d - 1) // 2 + d
    cols = []
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = 1.0
        cols.append(bracket(SEAlgebraElement.from_coords(d, e), mu_star).coords())
    return np.column_stack(cols)


def ad_spectrum(mu_star: SEAlgebraElement) -> np.ndarray:
    """Eigenvalues of ``nu -> [nu, mu_star]`` on se(d).

    The ad-matrix is block lower triangular (rotations feed translations,
    never the reverse), so the spectrum is taken from the two diagonal
    blocks; a full dense solve would lose half the digits on the Jordan
    blocks that generic screw motions produce in se(3).
    """
    if mu_star.d not in (1, 2, 3):
        raise ValueError("ad_spectrum supports d = 1, 2, 3")
    ad = ad_matrix(mu_star)
    r = mu_star.d * (mu_star.d - 1) // 2
    if np.any(ad[:r, r:] != 0.0):  # pragma: no cover - structural invariant
        return np.linalg.eigvals(ad)
    parts = [np.linalg.eigvals(ad[:r, :r]) if r else np.empty(0),
             np.linalg.eigvals(ad[r:, r:])]
    return np.concatenate(parts)


def embedding_spectrum(mu: SEAlgebraElement) -> np.ndarray:
    """Spectrum of the (d+1)x(d+1) matrix ``[[S, c], [0, 0]]`` (block triangular)."""
    return np.concatenate([np.linalg.eigvals(mu.S), [0.0]])


def ad_spectrum_formula(mu_star: SEAlgebraElement) -> np.ndarray:
    """``sigma(S)`` together with all pairwise sums ``mu_j + mu_k``, j < k."""
    ev = np.linalg.eigvals(mu_star.S)
    sums = [ev[j] + ev[k] for j, k in _so_pairs(mu_star.d)]
    return np.concatenate([ev, sums])


def containment_defect(mu_star: SEAlgebraElement) -> float:
    """Distance of ``sigma(ad)`` from the difference set ``sigma(mu) - sigma(mu)``."""
    emb = embedding_spectrum(mu_star)
    diffs = (emb[:, None] - emb[None, :]).ravel()
    ad = ad_spectrum(mu_star)
    return float(max(np.min(np.abs(diffs - lam)) for lam in ad))


def multiset_distance(a, b) -> float:
    """Largest deviation under the best one-to-one matching of two eigenvalue lists."""
    from scipy.optimize import linear_sum_assignment
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        return float("inf")
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max())


def random_algebra_element(d: int, rng: np.random.Generator, scale: float = 1.0) -> SEAlgebraElement:
    dim = d * (d - 1) // 2 + d
    return SEAlgebraElement.from_coords(d, scale * rng.standard_normal(dim))


# --- actions on fields -----------------------------------------------------

def group_action(g: SEGroupElement, v: Field) -> Field:
    """Sample ``v(Q^T (x - b))`` on the grid of ``v``.

    Linear (1D) or bilinear (2D) interpolation; outside the grid the nearest
    boundary value is used.
    """
    grid = v.grid
    if grid.dim != g.d:
        raise DimensionError("group and grid dimensions differ")
    if isinstance(grid, Grid1D):
        xs = grid.nodes()
        y = g.Q[0, 0] * (xs - g.b[0])
        out = np.column_stack([np.interp(y, xs, v.values[:, k].real)
                               + (1j * np.interp(y, xs, v.values[:, k].imag)
                                  if v.is_complex else 0.0) for k in range(v.m)])
        return Field(grid, out)
    nodes = grid.nodes()
    y = (nodes - g.b) @ g.Q  # rows are Q^T (x - b)
    idx = (y + grid.half_width) / grid.h
    n = grid.n_per_axis
    out = []
    for k in range(v.m):
        img = v.values[:, k].reshape(n, n)  # img[j, i]: x2-index j, x1-index i
        coords = np.vstack([idx[:, 1], idx[:, 0]])
        if v.is_complex:
            col = (ndimage.map_coordinates(img.real, coords, order=1, mode="nearest")
                   + 1j * ndimage.map_coordinates(img.imag, coords, order=1, mode="nearest"))
        else:
            col = ndimage.map_coordinates(img, coords, order=1, mode="nearest")
        out.append(col)
    return Field(grid, np.column_stack(out))


def _gradient(v: Field):
    grid = v.grid
    if isinstance(grid, Grid1D):
        return [DiffOp1D("first_central", grid).apply_array(v.values)]
    return [DiffOp2D("grad_component", grid, axis=a).apply_array(v.values) for a in (0, 1)]


def action_derivative(v: Field, mu: SEAlgebraElement) -> Field:
    """``-v_x (S x + c)`` with central-difference gradients."""
    grid = v.grid
    if grid.dim != mu.d:
        raise DimensionError("algebra and grid dimensions differ")
    x = grid.nodes().reshape(grid.node_count, grid.dim)
    vel = x @ mu.S.T + mu.c  # rows: S x + c
    grads = _gradient(v)
    out = -sum(vel[:, a, None] * grads[a] for a in range(grid.dim))
    return Field(grid, out)


@dataclass
class SymmetryMode:
    eigenvalue: complex
    algebra_coords: np.ndarray
    field: Field
    degenerate: bool


def symmetry_eigenpairs(v_star: Field, mu_star: SEAlgebraElement,
                        degenerate_tol: float = 1e-10) -> list:
    """Candidate eigenpairs of the linearization induced by the symmetry group.

    For every eigenpair ``(lam, nu)`` of ``[., mu_star]`` the function
    ``w = -v_x (S_nu x + c_nu)`` (complex-linear in ``nu``) is returned.
    Modes whose ``w`` vanishes to ``degenerate_tol`` are flagged.
    """
    d = mu_star.d
    ad = ad_matrix(mu_star)
    lam, vecs = np.linalg.eig(ad)
    scale = max(1.0, float(np.max(np.abs(v_star.values))))
    modes = []
    for k in range(len(lam)):
        nu = vecs[:, k]
        wr = action_derivative(v_star, SEAlgebraElement.from_coords(d, nu.real)).values
        wi = action_derivative(v_star, SEAlgebraElement.from_coords(d, nu.imag)).values
        w = wr + 1j * wi if np.any(nu.imag) else wr
        degenerate = bool(np.max(np.abs(w), initial=0.0) <= degenerate_tol * scale)
        if degenerate:
            warnings.warn(f"symmetry mode {k} (lambda={lam[k]:.3g}) has a vanishing eigenfunction")
        modes.append(SymmetryMode(complex(lam[k]), nu, Field(v_star.grid, w), degenerate))
    return modes
