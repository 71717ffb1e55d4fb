"""Finite-difference and Fourier spatial operators, banded and bordered solves.

Finite differences are second-order central (first-order one-sided for the
upwind kinds). Homogeneous Neumann conditions use mirror ghost nodes
``v[-1] = v[1]``; for one-sided stencils the boundary derivative is set to
zero, which is what the mirror gives for reflection-symmetric data.

Block systems of ``m`` components use node-major ordering: unknown
``i * m + k`` is component ``k`` at node ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack

from .core import DimensionError, Field, Grid1D, Grid2D

KINDS_1D = ("first_central", "first_upwind_pos", "first_upwind_neg", "second_central")


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a banded factorization hits a (numerically) zero pivot."""


def _stencil_diagonals(kind: str, n: int, h: float, bc: str) -> dict:
    one = np.ones(n)
    if kind == "second_central":
        diags = {-1: one / h**2, 0: -2.0 * one / h**2, 1: one / h**2}
        if bc == "neumann":
            diags[1] = diags[1].copy()
            diags[-1] = diags[-1].copy()
            diags[1][0] = 2.0 / h**2
            diags[-1][-1] = 2.0 / h**2
    elif kind == "first_central":
        diags = {-1: -0.5 * one / h, 1: 0.5 * one / h}
        if bc == "neumann":
            diags[1][0] = 0.0
            diags[-1][-1] = 0.0
    elif kind == "first_upwind_pos":
        # forward difference: what v_t = s v_x with s > 0 needs
        diags = {0: -one / h, 1: one / h}
        if bc == "neumann":
            diags[0][-1] = 0.0
    elif kind == "first_upwind_neg":
        diags = {-1: -one / h, 0: one / h}
        if bc == "neumann":
            diags[0][0] = 0.0
    else:
        raise ValueError(f"unknown stencil kind {kind!r}")
    if bc == "neumann":
        # entries pointing outside the grid
        for off, d in diags.items():
            if off > 0:
                d[n - off:] = 0.0
            elif off < 0:
                d[:-off] = 0.0
    return diags


@dataclass
class DiffOp1D:
    """1D derivative stencil with Neumann or periodic closure."""

    kind: str
    grid: Grid1D
    bc: str = "neumann"
    diagonals: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.bc not in ("neumann", "periodic"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if (self.bc == "periodic") != self.grid.periodic:
            raise ValueError("periodic stencils need a periodic grid and vice versa")
        self.diagonals = _stencil_diagonals(self.kind, self.grid.n, self.grid.h, self.bc)

    def apply_array(self, v: np.ndarray) -> np.ndarray:
        squeeze = v.ndim == 1
        v2 = v[:, None] if squeeze else v
        out = np.zeros(v2.shape, dtype=np.result_type(v2, float))
        n = self.grid.n
        for off, d in self.diagonals.items():
            if self.bc == "periodic":
                out += d[:, None] * np.roll(v2, -off, axis=0)
            elif off == 0:
                out += d[:, None] * v2
            elif off > 0:
                out[:n - off] += d[:n - off, None] * v2[off:]
            else:
                out[-off:] += d[-off:, None] * v2[:n + off]
        return out[:, 0] if squeeze else out

    def matrix(self) -> sp.csr_matrix:
        n = self.grid.n
        mat = sp.lil_matrix((n, n))
        for off, d in self.diagonals.items():
            for i in range(n):
                j = i + off
                if self.bc == "periodic":
                    j %= n
                elif not 0 <= j < n:
                    continue
                mat[i, j] += d[i]
        return mat.tocsr()


@dataclass
class DiffOp2D:
    """5-point Laplacian or a gradient component on a square Neumann grid."""

    kind: str
    grid: Grid2D
    bc: str = "neumann"
    axis: int = 0
    _mat: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        if self.bc != "neumann":
            raise ValueError("2D operators support Neumann closure only")
        n = self.grid.n_per_axis
        g1 = Grid1D(-self.grid.half_width, self.grid.half_width, n)
        eye = sp.identity(n, format="csr")
        if self.kind == "laplacian5":
            d2 = DiffOp1D("second_central", g1).matrix()
            self._mat = (sp.kron(eye, d2) + sp.kron(d2, eye)).tocsr()
        elif self.kind == "grad_component":
            d1 = DiffOp1D("first_central", g1).matrix()
            if self.axis == 0:
                self._mat = sp.kron(eye, d1).tocsr()
            elif self.axis == 1:
                self._mat = sp.kron(d1, eye).tocsr()
            else:
                raise ValueError("axis must be 0 or 1")
        else:
            raise ValueError(f"unknown 2D operator kind {self.kind!r}")

    def matrix(self) -> sp.csr_matrix:
        return self._mat

    def apply_array(self, v: np.ndarray) -> np.ndarray:
        return self._mat @ v


def apply(op: Union[DiffOp1D, DiffOp2D], v: Field) -> Field:
    """Apply a stencil operator componentwise to a field."""
    if v.grid != op.grid:
        raise DimensionError("operator and field grids differ")
    return Field(v.grid, op.apply_array(v.values))


# --- Fourier ---------------------------------------------------------------

def wavenumbers(grid: Grid1D) -> np.ndarray:
    return 2.0 * np.pi * np.fft.fftfreq(grid.n, d=grid.h)


def _require_periodic(grid) -> None:
    if not isinstance(grid, Grid1D) or not grid.periodic:
        raise ValueError("Fourier operators need a periodic 1D grid")


def fourier_symbol_multiply(v: Field, symbol: np.ndarray) -> Field:
    """Multiply each Fourier mode of ``v`` by ``symbol`` (FFT ordering)."""
    _require_periodic(v.grid)
    out = np.fft.ifft(symbol[:, None] * np.fft.fft(v.values, axis=0), axis=0)
    if not v.is_complex and np.allclose(symbol, np.conj(symbol[_mirror_index(len(symbol))])):
        out = out.real
    return Field(v.grid, out)


def _mirror_index(n: int) -> np.ndarray:
    return (-np.arange(n)) % n


def fourier_derivative(v: Field, order: int) -> Field:
    _require_periodic(v.grid)
    if order < 0:
        raise ValueError("derivative order must be non-negative")
    k = wavenumbers(v.grid)
    symbol = (1j * k) ** order
    if order % 2 == 1 and v.grid.n % 2 == 0:
        symbol[v.grid.n // 2] = 0.0  # unresolved Nyquist mode
    return fourier_symbol_multiply(v, symbol)


# --- banded matrices -------------------------------------------------------

@dataclass
class BandedMatrix:
    """Square matrix in LAPACK band storage: ``ab[u + i - j, j] = A[i, j]``."""

    l: int
    u: int
    ab: np.ndarray

    @property
    def n(self) -> int:
        return self.ab.shape[1]

    @classmethod
    def zeros(cls, n: int, l: int, u: int, dtype=float) -> "BandedMatrix":
        return cls(l, u, np.zeros((l + u + 1, n), dtype=dtype))

    @classmethod
    def from_dense(cls, a: np.ndarray, l: int, u: int) -> "BandedMatrix":
        n = a.shape[0]
        bm = cls.zeros(n, l, u, dtype=a.dtype)
        for k in range(-min(l, n - 1), min(u, n - 1) + 1):
            d = np.diagonal(a, k)
            if k >= 0:
                bm.ab[u - k, k:] = d
            else:
                bm.ab[u - k, :n + k] = d
        return bm

    def to_dense(self) -> np.ndarray:
        n = self.n
        a = np.zeros((n, n), dtype=self.ab.dtype)
        for k in self._offsets():
            if k >= 0:
                a += np.diag(self.ab[self.u - k, k:], k)
            else:
                a += np.diag(self.ab[self.u - k, :n + k], k)
        return a

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n = self.n
        y = np.zeros(np.broadcast_shapes(x.shape), dtype=np.result_type(self.ab, x))
        for k in self._offsets():
            row = self.ab[self.u - k]
            if k >= 0:
                y[:n - k] += (row[k:] * x[k:].T).T
            else:
                y[-k:] += (row[:n + k] * x[:n + k].T).T
        return y

    def _offsets(self) -> range:
        return range(-min(self.l, self.n - 1), min(self.u, self.n - 1) + 1)

    def add_diagonal(self, d) -> None:
        self.ab[self.u] += d

    def lu(self, pivot_rtol: float = 1e-13) -> "BandedLU":
        return BandedLU(self, pivot_rtol)


class BandedLU:
    """LU factorization with partial pivoting inside the band (LAPACK gbtrf)."""

    def __init__(self, mat: BandedMatrix, pivot_rtol: float = 1e-13):
        l, u = mat.l, mat.u
        complex_ = np.iscomplexobj(mat.ab)
        self._trf, self._trs = (lapack.zgbtrf, lapack.zgbtrs) if complex_ else (
            lapack.dgbtrf, lapack.dgbtrs)
        self.dtype = complex if complex_ else float
        ab = np.zeros((2 * l + u + 1, mat.n), dtype=self.dtype)
        ab[l:] = mat.ab
        lu, ipiv, info = self._trf(ab, l, u)
        if info > 0:
            raise SingularMatrixError(f"zero pivot at position {info - 1}")
        piv = np.abs(lu[l + u])
        if piv.min() <= pivot_rtol * piv.max():
            raise SingularMatrixError(
                f"pivot ratio {piv.min() / piv.max():.2e} below tolerance {pivot_rtol:g}")
        self.l, self.u = l, u
        self._lu, self._ipiv = lu, ipiv

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs)
        if np.iscomplexobj(rhs) and self.dtype is float:
            return self.solve(rhs.real) + 1j * self.solve(rhs.imag)
        b = np.asarray(rhs, dtype=self.dtype)
        x, info = self._trs(self._lu, self.l, self.u, b, self._ipiv)
        if info != 0:
            raise SingularMatrixError(f"gbtrs failed with info={info}")
        return x


def banded_solve(mat: BandedMatrix, rhs: np.ndarray) -> np.ndarray:
    return mat.lu().solve(rhs)


StencilSpec = Union[None, DiffOp1D, Mapping[int, np.ndarray]]


def assemble_banded_jacobian(terms: Sequence, n: int, m: int, dtype=float) -> BandedMatrix:
    """Sum of ``diag(coef) @ kron(stencil, I_m)`` terms in band storage.

    Each term is ``(stencil, coef)``. ``stencil`` is a :class:`DiffOp1D`, a
    mapping ``offset -> row coefficients`` or ``None`` (identity). ``coef`` is
    a scalar, an ``(n,)`` array, an ``(m, m)`` matrix or an ``(n, m, m)``
    array of pointwise blocks multiplying from the left.
    """
    parsed = []
    max_off = 0
    for stencil, coef in terms:
        if stencil is None:
            diags = {0: np.ones(n)}
        elif isinstance(stencil, DiffOp1D):
            if stencil.bc == "periodic":
                raise ValueError("periodic stencils are not banded")
            diags = stencil.diagonals
        else:
            diags = stencil
        coef = np.asarray(coef)
        if coef.ndim == 0:
            coef = np.broadcast_to(coef * np.eye(m), (n, m, m))
        elif coef.ndim == 1:
            coef = coef[:, None, None] * np.eye(m)
        elif coef.ndim == 2:
            coef = np.broadcast_to(coef, (n, m, m))
        parsed.append((diags, coef))
        max_off = max([max_off, *[abs(o) for o in diags]])
    bw = (max_off + 1) * m - 1
    bm = BandedMatrix.zeros(n * m, bw, bw, dtype=np.result_type(dtype, *[c for _, c in parsed]))
    idx = np.arange(n)
    for diags, coef in parsed:
        for off, d in diags.items():
            lo, hi = max(0, -off), min(n, n - off)
            i = idx[lo:hi]
            vals = coef[lo:hi] * d[lo:hi, None, None]
            for a in range(m):
                for b in range(m):
                    bm.ab[bw - off * m + a - b, (i + off) * m + b] += vals[:, a, b]
    return bm


def bordered_solve(solve: Callable[[np.ndarray], np.ndarray], border_cols: np.ndarray,
                   border_rows: np.ndarray, corner: np.ndarray, rhs: np.ndarray,
                   rhs_border: np.ndarray):
    """Solve ``[[J, B], [C, D]] [x; y] = [r; s]`` by block elimination.

    ``solve`` applies ``J^{-1}`` to a matrix of right-hand sides; ``B`` is
    ``(N, k)``, ``C`` is ``(k, N)``, ``D`` is ``(k, k)``.
    """
    k = border_cols.shape[1]
    sol = solve(np.column_stack([rhs, border_cols]))
    x1, x2 = sol[:, 0], sol[:, 1:]
    schur = np.atleast_2d(corner) - border_rows @ x2
    y = np.linalg.solve(schur, np.atleast_1d(rhs_border) - border_rows @ x1)
    x = x1 - x2 @ y
    return x, y.reshape(k)
